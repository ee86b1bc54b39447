#include "robust_ctrl/svg/svg.hpp"

#include <limits>

#include "robust_ctrl/errors.hpp"
#include "robust_ctrl/mpo/m_step.hpp"
#include "robust_ctrl/nn/gaussian.hpp"

namespace robust_ctrl::svg {

TapeCritic frozen_critic(const nn::QNetwork& critic) {
  return [&critic](nn::Var obs, nn::Var actions) {
    return critic.forward(obs, actions, nn::bind_constant(*obs.tape, critic.params()));
  };
}

SvgGradient svg_policy_gradient(const nn::Matrix& states, const nn::GaussianPolicy& policy, const TapeCritic& critic,
                                double alpha, const nn::Matrix& noise, bool clip_actions) {
  if (!(alpha >= 0.0)) throw ConfigError("svg: alpha must be >= 0");
  if (noise.rows() != states.rows() || noise.cols() != policy.spec().action_dim) {
    throw ShapeError("svg: noise must be batch x action_dim");
  }
  nn::GaussianPolicy copy = policy;
  nn::Tape tape;
  auto bound = nn::bind(tape, copy.params());
  auto out = copy.forward(tape.constant(states), bound);
  nn::Var actions = out.mean + out.std * tape.constant(noise);
  if (clip_actions) actions = nn::clip(actions, -1.0, 1.0);
  nn::Var q = critic(tape.constant(states), actions);
  if (q.rows() != states.rows() || q.cols() != 1) throw ShapeError("svg: critic must return batch x 1");
  nn::Var objective = nn::mean(q) + nn::scale(nn::mean(nn::entropy(out.std)), alpha);

  SvgGradient g;
  g.objective = objective.value()(0, 0);
  if (!std::isfinite(g.objective)) throw TrainingError("svg: non-finite objective");
  tape.backward(objective);
  g.gradient = nn::gather_grad(bound, copy.params());
  if (!g.gradient.allFinite()) throw TrainingError("svg: non-finite policy gradient");
  return g;
}

SvgGradient svg_policy_gradient(const nn::Matrix& states, const nn::GaussianPolicy& policy, const TapeCritic& critic,
                                double alpha, std::mt19937_64& rng, bool clip_actions) {
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Matrix noise(states.rows(), policy.spec().action_dim);
  for (Eigen::Index r = 0; r < noise.rows(); ++r) {
    for (Eigen::Index c = 0; c < noise.cols(); ++c) noise(r, c) = normal(rng);
  }
  return svg_policy_gradient(states, policy, critic, alpha, noise, clip_actions);
}

SvgImprover::SvgImprover(const SvgConfig& config)
    : config_(config), optimizer_(nn::AdamConfig{config.policy_learning_rate}) {
  if (!(config_.alpha >= 0.0)) throw ConfigError("svg: alpha must be >= 0");
}

mpo::ImproveStats SvgImprover::improve(const policy_eval::Batch& batch, nn::GaussianPolicy& policy,
                                       const nn::GaussianPolicy& pi_k, const nn::QNetwork& critic,
                                       std::mt19937_64& rng) {
  const auto g = svg_policy_gradient(batch.obs, policy, frozen_critic(critic), config_.alpha, rng, config_.clip_actions);
  optimizer_.step(policy.params().values(), -g.gradient);
  const auto [kl_mu, kl_sigma] = mpo::MStep::decoupled_kl(policy, pi_k, batch.obs);
  return {std::numeric_limits<double>::quiet_NaN(), kl_mu, kl_sigma};
}

mpo::TrainResult train_svg(const envs::EnvSet& env_set, const policy_eval::RobustnessSpec& spec,
                           const SvgConfig& config, const mpo::LoopConfig& loop,
                           const mpo::EpisodeCallback& on_episode) {
  SvgImprover improver(config);
  return mpo::run_actor_critic(env_set, spec, loop, config.policy, improver, on_episode);
}

}  // namespace robust_ctrl::svg
