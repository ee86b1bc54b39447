#pragma once

// Data-driven uncertainty sets: offline datasets collected from perturbed
// simulators, neural one-step models fitted to them, and the learned models
// exposed through the same generative-model interface as the simulators.

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "robust_ctrl/envs/env.hpp"
#include "robust_ctrl/nn/mlp.hpp"

namespace robust_ctrl::ddr {

/// Rows are transitions: raw simulator states before and after one step.
struct OfflineDataset {
  envs::EnvParams source;
  nn::Matrix states;       // n x state_dim
  nn::Matrix actions;      // n x action_dim
  nn::Matrix next_states;  // n x state_dim

  Eigen::Index size() const { return states.rows(); }
  /// Rows [begin, end).
  OfflineDataset slice(Eigen::Index begin, Eigen::Index end) const;
};

/// Maps an observation to an action in [-1, 1]^action_dim.
using BehaviorPolicy = std::function<std::vector<double>(const std::vector<double>& obs, std::mt19937_64& rng)>;

/// Uniform random actions on [-1, 1].
BehaviorPolicy uniform_behavior();

/// Rollouts of `behavior` from the start distribution, resetting when an
/// episode ends. Deterministic per seed.
OfflineDataset generate_dataset(const envs::EnvModel& model, Eigen::Index n, std::uint64_t seed,
                                const BehaviorPolicy& behavior = uniform_behavior());

/// Writes `<stem>.json` (manifest) and `<stem>.bin` (records as little-endian
/// doubles: state, action, next state).
void save_dataset(const std::string& stem, const OfflineDataset& data);
OfflineDataset load_dataset(const std::string& stem);

struct FitConfig {
  std::vector<Eigen::Index> hidden{64, 64};
  int epochs = 200;
  /// Upper bound on gradient steps regardless of epochs.
  int max_steps = 20000;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double holdout_fraction = 0.1;
  /// Encode angles as (cos, sin) at the input. Off for non-angular synthetic data.
  bool encode_angles = true;
  std::uint64_t seed = 0;
};

/// One-step model s' = s + delta(s, a), with delta = linear(x) + mlp(x) on a
/// normalized input x and normalized delta; angles are wrapped after the step.
/// The reward is the domain's analytic reward at the predicted state.
class LearnedModel final : public envs::DynamicsModel {
 public:
  LearnedModel(envs::EnvParams params, FitConfig config);

  envs::Domain domain() const override { return params_.domain; }
  const envs::EnvParams& params() const { return params_; }

  void set_state(const envs::EnvState& state) override { state_ = state; }
  envs::EnvState get_state() const override { return state_; }
  envs::StepResult step(std::span<const double> action) override;
  std::unique_ptr<envs::DynamicsModel> clone() const override;

  /// Predicted next raw states for a batch (n x state_dim).
  nn::Matrix predict(const nn::Matrix& states, const nn::Matrix& actions) const;

  void save(const std::string& path) const;
  static LearnedModel load(const std::string& path);

 private:
  friend struct FitAccess;

  nn::Matrix features(const nn::Matrix& states, const nn::Matrix& actions) const;

  envs::EnvParams params_;
  FitConfig config_;
  nn::Mlp net_;
  nn::ParamVector linear_;  // weight (in x out), bias (1 x out)
  nn::Vector in_mean_, in_std_, out_mean_, out_std_;
  envs::EnvState state_;
};

struct FitResult {
  LearnedModel model;
  double train_mse = 0.0;
  double heldout_mse = 0.0;
};

/// Fits a LearnedModel on a shuffled 90/10 split. Throws ConfigError when
/// the states do not vary (degenerate data) or the dataset is too small.
FitResult fit_model(const OfflineDataset& data, const FitConfig& config = {});

/// Mean squared one-step error in raw state units (angle errors wrapped).
double one_step_mse(const LearnedModel& model, const OfflineDataset& data);

/// Learned models as uncertainty-set members for the TD target.
std::vector<std::shared_ptr<const envs::DynamicsModel>> ddr_uncertainty_set(
    const std::vector<LearnedModel>& models);

}  // namespace robust_ctrl::ddr
