#pragma once

// R-MPO / RE-MPO / SRE-MPO: the actor-critic loop with robust policy
// evaluation in Step 1 and the MPO E-step and M-step as policy improvement.

#include "robust_ctrl/mpo/e_step.hpp"
#include "robust_ctrl/mpo/loop.hpp"
#include "robust_ctrl/mpo/m_step.hpp"

namespace robust_ctrl::mpo {

struct MpoConfig {
  double epsilon = 0.1;
  int n_action_samples = 15;
  MStepConfig m_step;
  double policy_learning_rate = 3e-4;
  nn::PolicySpec policy{0, 1, {64, 64}, false, 1e-4, 0.3};
};

class MpoImprover final : public PolicyImprover {
 public:
  explicit MpoImprover(const MpoConfig& config);

  ImproveStats improve(const policy_eval::Batch& batch, nn::GaussianPolicy& policy, const nn::GaussianPolicy& pi_k,
                       const nn::QNetwork& critic, std::mt19937_64& rng) override;

  double eta() const { return eta_; }
  const MStep& m_step() const { return m_step_; }

 private:
  MpoConfig config_;
  MStep m_step_;
  double eta_ = 1.0;
};

/// Trains in the nominal environment with the robustness given by `spec`.
TrainResult train(const envs::EnvSet& env_set, const policy_eval::RobustnessSpec& spec, const MpoConfig& config,
                  const LoopConfig& loop, const EpisodeCallback& on_episode = {});

/// Non-robust MPO acting in a uniformly drawn training environment each
/// episode; `objective` and `tau` are taken from `spec`, its mode is ignored.
TrainResult limited_dr_train(const envs::EnvSet& env_set, const policy_eval::RobustnessSpec& spec,
                             const MpoConfig& config, LoopConfig loop, const EpisodeCallback& on_episode = {});

}  // namespace robust_ctrl::mpo
