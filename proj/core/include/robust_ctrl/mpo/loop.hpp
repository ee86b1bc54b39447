#pragma once

// Actor-critic loop shared by MPO and SVG: act in the nominal environment (or a
// uniformly drawn training environment for Limited-DR), store transitions, and
// every `steps_per_round` steps run learner steps that update the critic with
// the configured robust TD target and then improve the policy.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "robust_ctrl/envs/env.hpp"
#include "robust_ctrl/nn/policy.hpp"
#include "robust_ctrl/policy_eval/td.hpp"

namespace robust_ctrl::mpo {

struct LoopConfig {
  int episodes = 100;
  std::uint64_t seed = 0;
  std::size_t batch_size = 128;
  std::size_t replay_capacity = 1000000;
  int steps_per_round = 50;
  int learner_steps_per_round = 10;
  /// Learning starts once the buffer holds this many transitions.
  std::size_t min_replay = 1000;
  int target_period = 200;
  double critic_learning_rate = 3e-4;
  std::vector<Eigen::Index> critic_hidden{64, 64};
  policy_eval::TdConfig td;
  /// Draw each episode's acting environment uniformly from the training set.
  bool limited_dr = false;
};

struct ImproveStats {
  double eta = 0.0;
  double kl_mu = 0.0;
  double kl_sigma = 0.0;
};

class PolicyImprover {
 public:
  virtual ~PolicyImprover() = default;
  /// Updates `policy` given the current target policy `pi_k` and critic.
  virtual ImproveStats improve(const policy_eval::Batch& batch, nn::GaussianPolicy& policy,
                               const nn::GaussianPolicy& pi_k, const nn::QNetwork& critic,
                               std::mt19937_64& rng) = 0;
};

struct EpisodeMetrics {
  int episode = 0;
  double nominal_return = 0.0;
  double critic_loss = 0.0;  // mean over the episode's learner steps, NaN if none
  double eta = 0.0;
  double kl_mu = 0.0;
  double kl_sigma = 0.0;
  double wall_ms = 0.0;
  int skipped_targets = 0;
  int env_index = -1;  // acting environment inside the training set, -1 for the nominal

  /// Equality on every deterministic field (wall time excluded).
  bool same_stream(const EpisodeMetrics& o) const;
};

struct TrainResult {
  nn::GaussianPolicy policy;
  nn::QNetwork critic;
  std::vector<EpisodeMetrics> metrics;
  bool aborted = false;
  std::string abort_reason;
};

using EpisodeCallback = std::function<void(const EpisodeMetrics&)>;

TrainResult run_actor_critic(const envs::EnvSet& env_set, const policy_eval::RobustnessSpec& spec,
                             const LoopConfig& config, const nn::PolicySpec& policy_spec, PolicyImprover& improver,
                             const EpisodeCallback& on_episode = {});

/// Uncertainty set made of the training models of `env_set`.
std::vector<std::shared_ptr<const envs::DynamicsModel>> training_models(const envs::EnvSet& env_set);

/// Clamps every action to [-1, 1].
nn::Matrix clamp_actions(nn::Matrix actions);

}  // namespace robust_ctrl::mpo
