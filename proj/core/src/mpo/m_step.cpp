#include "robust_ctrl/mpo/m_step.hpp"

#include <cmath>
#include <string>
#include <tuple>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::mpo {
namespace {

double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

MStep::MStep(MStepConfig config, nn::AdamConfig policy_optimizer)
    : config_(config), policy_opt_(policy_optimizer), dual_opt_(nn::AdamConfig{config.dual_learning_rate}) {
  if (!(config_.epsilon_mu > 0.0) || !(config_.epsilon_sigma > 0.0)) {
    throw ConfigError("m_step: KL bounds must be positive");
  }
  if (!(config_.max_alpha > 0.0) || config_.backtrack_steps < 0) throw ConfigError("m_step: invalid step control");
  raw_alpha_.resize(2);
  raw_alpha_ << softplus_inverse(config_.init_alpha_mu), softplus_inverse(config_.init_alpha_sigma);
}

void MStep::clamp_alphas() {
  const double raw_max = softplus_inverse(config_.max_alpha);
  raw_alpha_ = raw_alpha_.cwiseMin(raw_max);
}

double MStep::alpha_mu() const { return softplus_scalar(raw_alpha_[0]); }
double MStep::alpha_sigma() const { return softplus_scalar(raw_alpha_[1]); }

std::pair<double, double> MStep::decoupled_kl(const nn::GaussianPolicy& policy, const nn::GaussianPolicy& pi_k,
                                              const nn::Matrix& states) {
  const auto now = policy.distribution(states);
  const auto old = pi_k.distribution(states);
  const nn::DiagGaussian mean_only{now.mean, old.std};
  const nn::DiagGaussian std_only{old.mean, now.std};
  return {nn::kl_mean(mean_only, old).mean(), nn::kl_cov(std_only, old).mean()};
}

namespace {

struct Objective {
  nn::BoundParams bound;
  nn::Var weighted;
  nn::Var kl_mu;
  nn::Var kl_sigma;
};

// Decoupled weighted log-likelihood: the mean term uses pi_k's std and the std
// term uses pi_k's mean, plus the two trust-region KLs, on one tape.
Objective build_objective(nn::Tape& tape, nn::GaussianPolicy& policy, const nn::GaussianPolicy& pi_k,
                          const nn::Matrix& states, const nn::Matrix& actions, const nn::Matrix& weights) {
  const Eigen::Index K = states.rows(), N = weights.cols();
  if (weights.rows() != K || actions.rows() != K * N) throw ShapeError("m_step: dataset shapes disagree");
  const auto old = pi_k.distribution(states);

  nn::Matrix old_mean_rep(K * N, old.dim()), old_std_rep(K * N, old.dim());
  nn::Matrix w_flat(K * N, 1);
  for (Eigen::Index j = 0; j < K; ++j) {
    old_mean_rep.middleRows(j * N, N) = old.mean.row(j).replicate(N, 1);
    old_std_rep.middleRows(j * N, N) = old.std.row(j).replicate(N, 1);
    w_flat.middleRows(j * N, N) = weights.row(j).transpose();
  }

  Objective o;
  o.bound = nn::bind(tape, policy.params());
  auto out = policy.forward(tape.constant(states), o.bound);
  nn::Var mean_rep = nn::repeat_rows(out.mean, N);
  nn::Var std_rep = nn::repeat_rows(out.std, N);
  nn::Var ll_mu = nn::log_prob(mean_rep, tape.constant(old_std_rep), actions);
  nn::Var ll_sigma = nn::log_prob(tape.constant(old_mean_rep), std_rep, actions);
  o.weighted = nn::scale(nn::sum((ll_mu + ll_sigma) * tape.constant(w_flat)), 1.0 / static_cast<double>(K));

  nn::Var old_std = tape.constant(old.std);
  nn::Var two_var = tape.constant((2.0 * old.std.array().square()).matrix());
  o.kl_mu = nn::mean(nn::sum_cols(nn::square(out.mean - tape.constant(old.mean)) / two_var));
  o.kl_sigma = nn::mean(nn::sum_cols(
      nn::add_scalar(nn::log(old_std) - nn::log(out.std) + nn::square(out.std) / two_var, -0.5)));
  return o;
}

}  // namespace

nn::Vector MStep::likelihood_gradient(const nn::GaussianPolicy& policy, const nn::GaussianPolicy& pi_k,
                                      const nn::Matrix& states, const nn::Matrix& actions,
                                      const nn::Matrix& weights) {
  nn::GaussianPolicy copy = policy;
  nn::Tape tape;
  auto o = build_objective(tape, copy, pi_k, states, actions, weights);
  tape.backward(o.weighted);
  return nn::gather_grad(o.bound, copy.params());
}

MStepStats MStep::step(nn::GaussianPolicy& policy, const nn::GaussianPolicy& pi_k, const nn::Matrix& states,
                       const nn::Matrix& actions, const nn::Matrix& weights) {
  nn::Tape tape;
  auto [bound, weighted, kl_mu, kl_sigma] = build_objective(tape, policy, pi_k, states, actions, weights);

  const double a_mu = alpha_mu(), a_sigma = alpha_sigma();
  nn::Var loss = nn::scale(weighted, -1.0) + nn::scale(kl_mu, a_mu) + nn::scale(kl_sigma, a_sigma);
  MStepStats stats;
  stats.weighted_log_likelihood = weighted.value()(0, 0);
  const double pre_kl_mu = kl_mu.value()(0, 0), pre_kl_sigma = kl_sigma.value()(0, 0);
  if (!std::isfinite(loss.value()(0, 0))) {
    throw TrainingError("m_step: non-finite loss (weighted log-likelihood " + std::to_string(stats.weighted_log_likelihood) +
                        ", kl_mu " + std::to_string(pre_kl_mu) + ", kl_sigma " + std::to_string(pre_kl_sigma) + ")");
  }
  tape.backward(loss);

  const nn::Vector before = policy.params().values();
  policy_opt_.step(policy.params().values(), nn::gather_grad(bound, policy.params()));
  const nn::Vector delta = policy.params().values() - before;

  // Dual ascent on alpha * (eps - KL): alpha grows while the constraint is violated.
  nn::Vector dual_grad(2);
  dual_grad << (1.0 / (1.0 + std::exp(-raw_alpha_[0]))) * (config_.epsilon_mu - pre_kl_mu),
      (1.0 / (1.0 + std::exp(-raw_alpha_[1]))) * (config_.epsilon_sigma - pre_kl_sigma);
  dual_opt_.step(raw_alpha_, dual_grad);
  clamp_alphas();

  // A step only counts as violating if it leaves a constraint above the
  // rejection threshold and worse than before.
  const double limit_mu = config_.reject_factor * config_.epsilon_mu;
  const double limit_sigma = config_.reject_factor * config_.epsilon_sigma;
  auto violations = [&](double mu, double sigma) {
    return std::pair{mu > limit_mu && mu > pre_kl_mu, sigma > limit_sigma && sigma > pre_kl_sigma};
  };
  auto [post_mu, post_sigma] = decoupled_kl(policy, pi_k, states);
  auto [bad_mu, bad_sigma] = violations(post_mu, post_sigma);
  double shrink = 1.0;
  for (int i = 0; i < config_.backtrack_steps && (bad_mu || bad_sigma); ++i) {
    shrink *= 0.5;
    policy.params().set_values(before + shrink * delta);
    std::tie(post_mu, post_sigma) = decoupled_kl(policy, pi_k, states);
    std::tie(bad_mu, bad_sigma) = violations(post_mu, post_sigma);
    stats.backtracks = i + 1;
  }
  if (bad_mu || bad_sigma) {
    policy.params().set_values(before);
    if (bad_mu) raw_alpha_[0] = softplus_inverse(alpha_mu() * config_.boost_factor);
    if (bad_sigma) raw_alpha_[1] = softplus_inverse(alpha_sigma() * config_.boost_factor);
    clamp_alphas();
    post_mu = pre_kl_mu;
    post_sigma = pre_kl_sigma;
    stats.rejected = true;
  }
  stats.kl_mu = post_mu;
  stats.kl_sigma = post_sigma;
  return stats;
}

}  // namespace robust_ctrl::mpo
