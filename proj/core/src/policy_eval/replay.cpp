#include "robust_ctrl/policy_eval/replay.hpp"

#include <algorithm>
#include <cmath>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::policy_eval {

ReplayBuffer::ReplayBuffer(std::size_t obs_dim, std::size_t action_dim, std::size_t capacity)
    : obs_dim_(obs_dim), action_dim_(action_dim), capacity_(capacity) {
  if (obs_dim == 0 || action_dim == 0 || capacity == 0) throw ConfigError("replay buffer: zero dimension");
}

void ReplayBuffer::add(const Transition& t) {
  if (t.obs.size() != obs_dim_ || t.next_obs.size() != obs_dim_ || t.action.size() != action_dim_) {
    throw ShapeError("replay buffer: transition shape mismatch");
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(t.obs) || !finite(t.next_obs) || !finite(t.action) || !std::isfinite(t.reward)) {
    throw DomainError("replay buffer: non-finite transition");
  }
  if (size_ < capacity_) {
    obs_.insert(obs_.end(), t.obs.begin(), t.obs.end());
    actions_.insert(actions_.end(), t.action.begin(), t.action.end());
    rewards_.push_back(t.reward);
    next_obs_.insert(next_obs_.end(), t.next_obs.begin(), t.next_obs.end());
    states_.push_back(t.env_state);
    ++size_;
  } else {
    std::copy(t.obs.begin(), t.obs.end(), obs_.begin() + head_ * obs_dim_);
    std::copy(t.action.begin(), t.action.end(), actions_.begin() + head_ * action_dim_);
    rewards_[head_] = t.reward;
    std::copy(t.next_obs.begin(), t.next_obs.end(), next_obs_.begin() + head_ * obs_dim_);
    states_[head_] = t.env_state;
  }
  head_ = (head_ + 1) % capacity_;
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& slots) const {
  const auto n = static_cast<Eigen::Index>(slots.size());
  const auto od = static_cast<Eigen::Index>(obs_dim_), ad = static_cast<Eigen::Index>(action_dim_);
  Batch b{nn::Matrix(n, od), nn::Matrix(n, ad), nn::Vector(n), nn::Matrix(n, od), {}};
  b.states.reserve(slots.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t i = slots[r];
    for (Eigen::Index c = 0; c < od; ++c) {
      b.obs(r, c) = obs_[i * obs_dim_ + c];
      b.next_obs(r, c) = next_obs_[i * obs_dim_ + c];
    }
    for (Eigen::Index c = 0; c < ad; ++c) b.actions(r, c) = actions_[i * action_dim_ + c];
    b.rewards[r] = rewards_[i];
    b.states.push_back(states_[i]);
  }
  return b;
}

Batch ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (size_ == 0) throw UsageError("replay buffer: sampling from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> slots(n);
  for (auto& s : slots) s = pick(rng);
  return gather(slots);
}

Batch ReplayBuffer::all() const {
  std::vector<std::size_t> slots(size_);
  const std::size_t oldest = size_ < capacity_ ? 0 : head_;
  for (std::size_t i = 0; i < size_; ++i) slots[i] = (oldest + i) % capacity_;
  return gather(slots);
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw UsageError("replay buffer: index out of range");
  const std::size_t slot = (size_ < capacity_ ? i : (head_ + i) % capacity_);
  Transition t;
  t.obs.assign(obs_.begin() + slot * obs_dim_, obs_.begin() + (slot + 1) * obs_dim_);
  t.action.assign(actions_.begin() + slot * action_dim_, actions_.begin() + (slot + 1) * action_dim_);
  t.reward = rewards_[slot];
  t.next_obs.assign(next_obs_.begin() + slot * obs_dim_, next_obs_.begin() + (slot + 1) * obs_dim_);
  t.env_state = states_[slot];
  return t;
}

}  // namespace robust_ctrl::policy_eval
