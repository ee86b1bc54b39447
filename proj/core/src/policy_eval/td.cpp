#include "robust_ctrl/policy_eval/td.hpp"

#include <cmath>
#include <numeric>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::policy_eval {

const char* to_string(Objective objective) {
  return objective == Objective::kExpected ? "expected" : "entropy_regularized";
}

Objective objective_from_string(const std::string& name) {
  if (name == "expected") return Objective::kExpected;
  if (name == "entropy_regularized") return Objective::kEntropyRegularized;
  throw ConfigError("unknown objective '" + name + "'");
}

void RobustnessSpec::validate() const {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be finite and >= 0");
  if (mode != Mode::kNonRobust && models.empty()) throw ConfigError("robust modes need a nonempty uncertainty set");
  for (const auto& m : models) {
    if (!m) throw ConfigError("null model in uncertainty set");
  }
  if (!weights.empty()) {
    if (weights.size() != models.size()) throw ConfigError("weights must match the uncertainty set size");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw ConfigError("weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("weights must sum to one");
  }
}

std::vector<double> RobustnessSpec::effective_weights() const {
  if (!weights.empty()) return weights;
  return std::vector<double>(models.size(), models.empty() ? 0.0 : 1.0 / static_cast<double>(models.size()));
}

TdTargetComputer::TdTargetComputer(RobustnessSpec spec, TdConfig config)
    : spec_(std::move(spec)), config_(config) {
  spec_.validate();
  if (config_.next_action_samples < 1) throw ConfigError("next_action_samples must be >= 1");
  if (!(config_.discount > 0.0 && config_.discount < 1.0)) throw ConfigError("discount must lie in (0, 1)");
  for (const auto& m : spec_.models) workers_.push_back(m->clone());
  weights_ = spec_.effective_weights();
}

nn::Matrix TdTargetComputer::restep(const Batch& batch, std::vector<char>& valid) {
  const Eigen::Index B = batch.size();
  const auto K = static_cast<Eigen::Index>(workers_.size());
  nn::Matrix next(K * B, batch.obs.cols());
  std::vector<double> action(static_cast<std::size_t>(batch.actions.cols()));
  for (Eigen::Index k = 0; k < K; ++k) {
    auto& model = *workers_[k];
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index c = 0; c < batch.actions.cols(); ++c) action[c] = batch.actions(b, c);
      try {
        model.set_state(batch.states[b]);
        model.step(action);
        const auto obs = model.observation();
        if (static_cast<Eigen::Index>(obs.size()) != next.cols()) throw ShapeError("model observation width differs");
        for (Eigen::Index c = 0; c < next.cols(); ++c) next(k * B + b, c) = obs[c];
        if (!next.row(k * B + b).allFinite()) throw PhysicsError("non-finite predicted observation");
      } catch (const PhysicsError&) {
        valid[b] = 0;
        next.row(k * B + b) = batch.next_obs.row(b);
      } catch (const DomainError&) {
        valid[b] = 0;
        next.row(k * B + b) = batch.next_obs.row(b);
      }
    }
  }
  return next;
}

TdResult TdTargetComputer::compute(const Batch& batch, const nn::QNetwork& target_critic,
                                   const nn::GaussianPolicy& pi_k, const nn::GaussianPolicy& pi_ref,
                                   std::mt19937_64& rng) {
  const Eigen::Index B = batch.size();
  const Eigen::Index M = config_.next_action_samples;
  const Eigen::Index d = batch.actions.cols();

  // Draw the noise first so every mode consumes the generator identically.
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Matrix noise(B * M, d);
  for (Eigen::Index r = 0; r < noise.rows(); ++r)
    for (Eigen::Index c = 0; c < d; ++c) noise(r, c) = normal(rng);

  TdResult out;
  out.valid.assign(static_cast<std::size_t>(B), 1);
  const bool nominal_only = spec_.mode == Mode::kNonRobust;
  const Eigen::Index K = nominal_only ? 1 : static_cast<Eigen::Index>(workers_.size());
  const nn::Matrix next = nominal_only ? batch.next_obs : restep(batch, out.valid);

  const nn::DiagGaussian dist = pi_k.distribution(next);
  nn::Matrix obs_rep(K * B * M, next.cols());
  nn::Matrix act_rep(K * B * M, d);
  for (Eigen::Index kb = 0; kb < K * B; ++kb) {
    const Eigen::Index b = kb % B;
    for (Eigen::Index m = 0; m < M; ++m) {
      const Eigen::Index row = kb * M + m;
      obs_rep.row(row) = next.row(kb);
      act_rep.row(row) =
          (dist.mean.row(kb) + dist.std.row(kb).cwiseProduct(noise.row(b * M + m))).cwiseMax(-1.0).cwiseMin(1.0);
    }
  }
  const nn::Vector q = target_critic.value(obs_rep, act_rep);

  const double tau = spec_.effective_tau();
  nn::Vector kl_next;
  if (tau > 0.0) kl_next = nn::kl(dist, pi_ref.distribution(next));

  out.candidates.resize(B, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const Eigen::Index kb = k * B + b;
      double c = q.segment(kb * M, M).sum() / static_cast<double>(M);
      if (tau > 0.0) c -= tau * kl_next[kb];
      out.candidates(b, k) = c;
    }
  }

  out.targets.resize(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    double agg = 0.0;
    switch (spec_.mode) {
      case Mode::kNonRobust:
        agg = out.candidates(b, 0);
        break;
      case Mode::kRobust:
        agg = out.candidates.row(b).minCoeff();
        break;
      case Mode::kSoftRobust:
        for (Eigen::Index k = 0; k < K; ++k) agg += weights_[k] * out.candidates(b, k);
        break;
    }
    out.targets[b] = batch.rewards[b] + config_.discount * agg;
    if (!out.valid[b]) ++out.skipped;
  }
  return out;
}

CriticStep critic_update(const Batch& batch, CriticPair& critic, const nn::GaussianPolicy& pi_k,
                         const nn::GaussianPolicy& pi_ref, TdTargetComputer& targets, nn::Adam& optimizer,
                         std::mt19937_64& rng) {
  const TdResult td = targets.compute(batch, critic.target, pi_k, pi_ref, rng);
  const Eigen::Index B = batch.size();
  nn::Matrix mask(B, 1), y(B, 1);
  double n_valid = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    mask(b, 0) = td.valid[b] ? 1.0 : 0.0;
    y(b, 0) = td.valid[b] ? td.targets[b] : 0.0;
    n_valid += mask(b, 0);
  }
  CriticStep step{0.0, td.skipped};
  if (n_valid == 0.0) return step;

  nn::Tape tape;
  auto bound = nn::bind(tape, critic.online.params());
  nn::Var q = critic.online.forward(tape.constant(batch.obs), tape.constant(batch.actions), bound);
  nn::Var err = (q - tape.constant(y)) * tape.constant(mask);
  nn::Var loss = nn::scale(nn::sum(nn::square(err)), 1.0 / n_valid);
  step.loss = loss.value()(0, 0);
  if (!std::isfinite(step.loss)) throw TrainingError("critic loss is not finite");
  tape.backward(loss);
  optimizer.step(critic.online.params().values(), nn::gather_grad(bound, critic.online.params()));
  ++critic.updates;
  if (critic.update_period > 0 && critic.updates % static_cast<std::uint64_t>(critic.update_period) == 0) {
    critic.sync_target();
  }
  return step;
}

nn::Vector full_q(const nn::QNetwork& critic, const nn::GaussianPolicy& pi_k, const nn::GaussianPolicy& pi_ref,
                  const nn::Matrix& obs, const nn::Matrix& actions, double tau) {
  nn::Vector q_tilde = critic.value(obs, actions);
  if (tau == 0.0) return q_tilde;
  return q_tilde - tau * nn::kl(pi_k.distribution(obs), pi_ref.distribution(obs));
}

}  // namespace robust_ctrl::policy_eval
