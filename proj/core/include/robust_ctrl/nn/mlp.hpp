#pragma once

// Feed-forward network: the first hidden layer is followed by layer
// normalization and tanh, later hidden layers by ELU, and the output is linear.

#include <random>
#include <vector>

#include "robust_ctrl/nn/params.hpp"

namespace robust_ctrl::nn {

struct MlpSpec {
  Eigen::Index input_dim = 0;
  std::vector<Eigen::Index> hidden;
  Eigen::Index output_dim = 0;
  bool layer_norm_first = true;
  /// Multiplier on the initial weights of the output layer.
  double output_init_scale = 1.0;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }

  /// LeCun-uniform weights, zero biases, unit layer-norm gain.
  void init(std::mt19937_64& rng);

  /// Tape-free forward pass on a (batch x input_dim) matrix. Throws DomainError
  /// on non-finite input.
  Matrix forward(const Matrix& x) const;
  /// Differentiable forward pass using parameters bound on the same tape.
  Var forward(Var x, const BoundParams& bound) const;

  /// Index of the output layer's bias block, for head-specific initialization.
  std::size_t output_bias_block() const { return output_bias_; }

 private:
  struct Layer {
    std::size_t weight = 0;
    std::size_t bias = 0;
  };
  MlpSpec spec_;
  ParamVector params_;
  std::vector<Layer> layers_;
  std::size_t ln_gain_ = 0;
  std::size_t ln_offset_ = 0;
  std::size_t output_bias_ = 0;
};

void check_finite(const Matrix& x, const char* what);

}  // namespace robust_ctrl::nn
