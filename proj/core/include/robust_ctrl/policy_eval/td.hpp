#pragma once

// TD targets for non-robust, robust and soft-robust policy evaluation, with
// either the expected-return or the entropy-regularized objective. In the
// entropy-regularized case the critic stores Q-tilde and the KL penalty at the
// next state enters the target explicitly.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "robust_ctrl/envs/env.hpp"
#include "robust_ctrl/mdp/tabular.hpp"
#include "robust_ctrl/nn/adam.hpp"
#include "robust_ctrl/nn/policy.hpp"
#include "robust_ctrl/policy_eval/replay.hpp"

namespace robust_ctrl::policy_eval {

using mdp::Mode;

enum class Objective { kExpected, kEntropyRegularized };
const char* to_string(Objective objective);
Objective objective_from_string(const std::string& name);

struct RobustnessSpec {
  Mode mode = Mode::kNonRobust;
  Objective objective = Objective::kExpected;
  double tau = 0.0;
  /// Weights over `models` for the soft-robust mode; empty means uniform.
  std::vector<double> weights;
  /// Uncertainty set. Unused by the non-robust mode, which bootstraps from the
  /// stored next observation.
  std::vector<std::shared_ptr<const envs::DynamicsModel>> models;

  void validate() const;
  /// Normalized weights, uniform when none were given.
  std::vector<double> effective_weights() const;
  double effective_tau() const { return objective == Objective::kEntropyRegularized ? tau : 0.0; }
};

struct TdConfig {
  double discount = 0.99;
  /// Next actions sampled per model and averaged.
  int next_action_samples = 1;
};

/// Online critic plus a target copy refreshed every `update_period` updates.
struct CriticPair {
  nn::QNetwork online;
  nn::QNetwork target;
  int update_period = 200;
  std::uint64_t updates = 0;

  CriticPair() = default;
  CriticPair(const nn::QNetwork& net, int period) : online(net), target(net), update_period(period) {}

  void sync_target() { target.params().set_values(online.params().values()); }
};

struct TdResult {
  nn::Vector targets;
  /// 0 where a model step diverged; those rows are excluded from the loss.
  std::vector<char> valid;
  /// Per-transition continuation candidates, one column per model (one column
  /// for the non-robust mode).
  nn::Matrix candidates;
  int skipped = 0;
};

/// Computes TD targets. Holds one private clone of every uncertainty-set model
/// so repeated calls do not re-clone.
class TdTargetComputer {
 public:
  TdTargetComputer(RobustnessSpec spec, TdConfig config);

  const RobustnessSpec& spec() const { return spec_; }
  const TdConfig& config() const { return config_; }

  /// Action noise is drawn from `rng` identically in every mode (common random
  /// numbers), so streams stay aligned when the mode changes.
  TdResult compute(const Batch& batch, const nn::QNetwork& target_critic, const nn::GaussianPolicy& pi_k,
                   const nn::GaussianPolicy& pi_ref, std::mt19937_64& rng);

  /// Next observations reached by re-stepping every model from the stored
  /// states, stacked model-major: row k * B + b. Rows whose step failed keep the
  /// stored next observation and are flagged in `valid`.
  nn::Matrix restep(const Batch& batch, std::vector<char>& valid);

 private:
  RobustnessSpec spec_;
  TdConfig config_;
  std::vector<std::unique_ptr<envs::DynamicsModel>> workers_;
  std::vector<double> weights_;
};

/// One gradient step on the mean squared TD error. Returns the loss before the
/// step. Throws TrainingError on a non-finite loss.
struct CriticStep {
  double loss = 0.0;
  int skipped = 0;
};
CriticStep critic_update(const Batch& batch, CriticPair& critic, const nn::GaussianPolicy& pi_k,
                         const nn::GaussianPolicy& pi_ref, TdTargetComputer& targets, nn::Adam& optimizer,
                         std::mt19937_64& rng);

/// Full regularized action value Q = Q-tilde - tau * KL(pi_k || pi_ref) at each state.
nn::Vector full_q(const nn::QNetwork& critic, const nn::GaussianPolicy& pi_k, const nn::GaussianPolicy& pi_ref,
                  const nn::Matrix& obs, const nn::Matrix& actions, double tau);

}  // namespace robust_ctrl::policy_eval
