#pragma once

// Entropy-regularized SVG(0): reparameterized policy gradient through the
// critic, a = mu(s) + sigma(s) * zeta, plus alpha times the policy entropy.
// Trained with the same robust critic loop as MPO.

#include <cmath>
#include <functional>
#include <random>

#include "robust_ctrl/mpo/loop.hpp"
#include "robust_ctrl/nn/adam.hpp"

namespace robust_ctrl::svg {

struct SvgConfig {
  double alpha = 1e-3;
  double policy_learning_rate = 3e-4;
  /// Clip reparameterized actions to [-1, 1] before the critic, as in acting.
  bool clip_actions = true;
  /// min_std = sqrt(0.1), the minimum variance.
  nn::PolicySpec policy{0, 1, {64, 64}, true, std::sqrt(0.1), 0.6};
};

/// Differentiable Q(s, a) evaluated on a tape, B x 1.
using TapeCritic = std::function<nn::Var(nn::Var obs, nn::Var actions)>;

/// Critic network with frozen parameters.
TapeCritic frozen_critic(const nn::QNetwork& critic);

struct SvgGradient {
  double objective = 0.0;  // mean_j Q(s_j, mu + sigma zeta_j) + alpha H(pi(.|s_j))
  nn::Vector gradient;     // d objective / d policy parameters (ascent direction)
};

/// One noise row per state (`noise` is B x action_dim).
SvgGradient svg_policy_gradient(const nn::Matrix& states, const nn::GaussianPolicy& policy, const TapeCritic& critic,
                                double alpha, const nn::Matrix& noise, bool clip_actions = true);

SvgGradient svg_policy_gradient(const nn::Matrix& states, const nn::GaussianPolicy& policy, const TapeCritic& critic,
                                double alpha, std::mt19937_64& rng, bool clip_actions = true);

class SvgImprover final : public mpo::PolicyImprover {
 public:
  explicit SvgImprover(const SvgConfig& config);

  mpo::ImproveStats improve(const policy_eval::Batch& batch, nn::GaussianPolicy& policy,
                            const nn::GaussianPolicy& pi_k, const nn::QNetwork& critic,
                            std::mt19937_64& rng) override;

 private:
  SvgConfig config_;
  nn::Adam optimizer_;
};

mpo::TrainResult train_svg(const envs::EnvSet& env_set, const policy_eval::RobustnessSpec& spec,
                           const SvgConfig& config, const mpo::LoopConfig& loop,
                           const mpo::EpisodeCallback& on_episode = {});

}  // namespace robust_ctrl::svg
