#pragma once

// M-step of MPO: weighted maximum likelihood with decoupled trust regions on
// the mean (epsilon_mu) and the standard deviation (epsilon_sigma), enforced
// through Lagrange multipliers adapted by dual gradient steps.

#include "robust_ctrl/nn/adam.hpp"
#include "robust_ctrl/nn/policy.hpp"

namespace robust_ctrl::mpo {

struct MStepConfig {
  double epsilon_mu = 0.01;
  double epsilon_sigma = 1e-5;
  double dual_learning_rate = 1e-2;
  double init_alpha_mu = 1.0;
  double init_alpha_sigma = 10.0;
  /// A step whose KL exceeds this multiple of its bound, and grew, is shrunk
  /// by halving up to `backtrack_steps` times and undone if still violating.
  double reject_factor = 10.0;
  int backtrack_steps = 6;
  /// Multiplier applied to the violated constraint's alpha on rejection.
  double boost_factor = 10.0;
  /// Both multipliers are kept at or below this value.
  double max_alpha = 1e6;
};

struct MStepStats {
  double weighted_log_likelihood = 0.0;
  double kl_mu = 0.0;
  double kl_sigma = 0.0;
  int backtracks = 0;
  bool rejected = false;
};

class MStep {
 public:
  MStep(MStepConfig config, nn::AdamConfig policy_optimizer);

  const MStepConfig& config() const { return config_; }
  double alpha_mu() const;
  double alpha_sigma() const;

  /// One gradient step fitting `policy` to the weighted samples. `actions` holds
  /// N samples per state, row j * N + i; `weights` is K x N with rows summing to one.
  MStepStats step(nn::GaussianPolicy& policy, const nn::GaussianPolicy& pi_k, const nn::Matrix& states,
                  const nn::Matrix& actions, const nn::Matrix& weights);

  /// Gradient of the decoupled weighted log-likelihood alone (no KL terms).
  static nn::Vector likelihood_gradient(const nn::GaussianPolicy& policy, const nn::GaussianPolicy& pi_k,
                                        const nn::Matrix& states, const nn::Matrix& actions,
                                        const nn::Matrix& weights);

  /// Batch-mean decoupled KLs of `policy` from `pi_k` at `states`.
  static std::pair<double, double> decoupled_kl(const nn::GaussianPolicy& policy, const nn::GaussianPolicy& pi_k,
                                                const nn::Matrix& states);

 private:
  void clamp_alphas();

  MStepConfig config_;
  nn::Adam policy_opt_;
  nn::Adam dual_opt_;
  nn::Vector raw_alpha_;  // softplus pre-activations of (alpha_mu, alpha_sigma)
};

}  // namespace robust_ctrl::mpo
