#include "robust_ctrl/nn/mlp.hpp"

#include <cmath>
#include <string>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::nn {

void check_finite(const Matrix& x, const char* what) {
  if (!x.allFinite()) throw DomainError(std::string(what) + ": non-finite input");
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  if (spec_.input_dim <= 0 || spec_.output_dim <= 0) throw ShapeError("mlp: dimensions must be positive");
  Eigen::Index in = spec_.input_dim;
  std::vector<Eigen::Index> widths = spec_.hidden;
  widths.push_back(spec_.output_dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    Layer layer;
    layer.weight = params_.add("w" + std::to_string(l), in, widths[l]);
    layer.bias = params_.add("b" + std::to_string(l), 1, widths[l]);
    layers_.push_back(layer);
    if (l == 0 && spec_.layer_norm_first && !spec_.hidden.empty()) {
      ln_gain_ = params_.add("ln_gain", 1, widths[0]);
      ln_offset_ = params_.add("ln_offset", 1, widths[0]);
    }
    in = widths[l];
  }
  output_bias_ = layers_.back().bias;
}

void Mlp::init(std::mt19937_64& rng) {
  params_.values().setZero();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto w = params_.block(layers_[l].weight);
    double bound = std::sqrt(3.0 / static_cast<double>(w.rows()));
    if (l + 1 == layers_.size()) bound *= spec_.output_init_scale;
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
  }
  if (spec_.layer_norm_first && !spec_.hidden.empty()) params_.block(ln_gain_).setOnes();
}

Matrix Mlp::forward(const Matrix& x) const {
  check_finite(x, "mlp forward");
  if (x.cols() != spec_.input_dim) throw ShapeError("mlp forward: wrong input width");
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = (h * params_.block(layers_[l].weight)).rowwise() + params_.block(layers_[l].bias).row(0);
    if (l + 1 == layers_.size()) return z;
    if (l == 0 && spec_.layer_norm_first) {
      z = layer_norm(z, params_.block(ln_gain_), params_.block(ln_offset_));
      h = tanh(z);
    } else {
      h = elu(z);
    }
  }
  return h;
}

Var Mlp::forward(Var x, const BoundParams& bound) const {
  check_finite(x.value(), "mlp forward");
  if (x.cols() != spec_.input_dim) throw ShapeError("mlp forward: wrong input width");
  if (bound.vars.size() != params_.layout().size()) throw ShapeError("mlp forward: parameters not bound");
  Var h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Var z = add_row(matmul(h, bound.vars[layers_[l].weight]), bound.vars[layers_[l].bias]);
    if (l + 1 == layers_.size()) return z;
    if (l == 0 && spec_.layer_norm_first) {
      h = tanh(layer_norm(z, bound.vars[ln_gain_], bound.vars[ln_offset_]));
    } else {
      h = elu(z);
    }
  }
  return h;
}

}  // namespace robust_ctrl::nn
