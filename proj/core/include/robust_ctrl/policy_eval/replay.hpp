#pragma once

#include <random>
#include <vector>

#include "robust_ctrl/envs/env.hpp"
#include "robust_ctrl/nn/tape.hpp"

namespace robust_ctrl::policy_eval {

/// One step collected in an acting environment. `env_state` is the raw
/// simulator state at `obs`, kept so that other models can be re-stepped from it.
struct Transition {
  std::vector<double> obs;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_obs;
  envs::EnvState env_state;
};

struct Batch {
  nn::Matrix obs;
  nn::Matrix actions;
  nn::Vector rewards;
  nn::Matrix next_obs;
  std::vector<envs::EnvState> states;

  Eigen::Index size() const { return obs.rows(); }
};

/// Fixed-capacity FIFO buffer with uniform sampling.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t obs_dim, std::size_t action_dim, std::size_t capacity = 1000000);

  void add(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t action_dim() const { return action_dim_; }

  /// `n` indices drawn uniformly with replacement.
  Batch sample(std::size_t n, std::mt19937_64& rng) const;
  /// Rows in insertion order, oldest first (at most the last `capacity` rows).
  Batch all() const;
  Transition at(std::size_t i) const;

 private:
  Batch gather(const std::vector<std::size_t>& slots) const;

  std::size_t obs_dim_, action_dim_, capacity_;
  std::size_t size_ = 0, head_ = 0;
  std::vector<double> obs_, actions_, rewards_, next_obs_;
  std::vector<envs::EnvState> states_;
};

}  // namespace robust_ctrl::policy_eval
