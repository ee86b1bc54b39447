#pragma once

#include <cstdint>

#include "robust_ctrl/nn/tape.hpp"

namespace robust_ctrl::nn {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Rescales the gradient to this global norm when exceeded; 0 disables.
  double max_grad_norm = 0.0;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return t_; }

  /// Descends along `grad`. Throws DivergenceError on a non-finite gradient.
  void step(Vector& params, const Vector& grad);
  void reset();

 private:
  AdamConfig config_;
  Vector m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace robust_ctrl::nn
