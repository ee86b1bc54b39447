#include "robust_ctrl/mpo/mpo.hpp"

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::mpo {

MpoImprover::MpoImprover(const MpoConfig& config)
    : config_(config), m_step_(config.m_step, nn::AdamConfig{config.policy_learning_rate}) {
  if (config_.n_action_samples < 1) throw ConfigError("n_action_samples must be >= 1");
  if (!(config_.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

ImproveStats MpoImprover::improve(const policy_eval::Batch& batch, nn::GaussianPolicy& policy,
                                  const nn::GaussianPolicy& pi_k, const nn::QNetwork& critic, std::mt19937_64& rng) {
  const Eigen::Index K = batch.size(), N = config_.n_action_samples;
  const auto dist = pi_k.distribution(batch.obs);
  const Eigen::Index d = dist.dim();
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Matrix actions(K * N, d), obs_rep(K * N, batch.obs.cols());
  for (Eigen::Index j = 0; j < K; ++j) {
    for (Eigen::Index i = 0; i < N; ++i) {
      const Eigen::Index r = j * N + i;
      for (Eigen::Index c = 0; c < d; ++c) actions(r, c) = dist.mean(j, c) + dist.std(j, c) * normal(rng);
      obs_rep.row(r) = batch.obs.row(j);
    }
  }
  const nn::Vector q = critic.value(obs_rep, clamp_actions(actions));
  nn::Matrix q_table(K, N);
  for (Eigen::Index j = 0; j < K; ++j) q_table.row(j) = q.segment(j * N, N).transpose();

  const auto e = e_step_weights(q_table, config_.epsilon, eta_);
  eta_ = e.eta;
  const auto stats = m_step_.step(policy, pi_k, batch.obs, actions, e.weights);
  return {eta_, stats.kl_mu, stats.kl_sigma};
}

TrainResult train(const envs::EnvSet& env_set, const policy_eval::RobustnessSpec& spec, const MpoConfig& config,
                  const LoopConfig& loop, const EpisodeCallback& on_episode) {
  MpoImprover improver(config);
  return run_actor_critic(env_set, spec, loop, config.policy, improver, on_episode);
}

TrainResult limited_dr_train(const envs::EnvSet& env_set, const policy_eval::RobustnessSpec& spec,
                             const MpoConfig& config, LoopConfig loop, const EpisodeCallback& on_episode) {
  policy_eval::RobustnessSpec nominal = spec;
  nominal.mode = mdp::Mode::kNonRobust;
  nominal.weights.clear();
  nominal.models.clear();
  loop.limited_dr = true;
  return train(env_set, nominal, config, loop, on_episode);
}

}  // namespace robust_ctrl::mpo
