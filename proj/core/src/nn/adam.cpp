#include "robust_ctrl/nn/adam.hpp"

#include <cmath>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::nn {

void Adam::step(Vector& params, const Vector& grad) {
  if (grad.size() != params.size()) throw ShapeError("adam: gradient size mismatch");
  if (!grad.allFinite()) throw DivergenceError("adam: non-finite gradient");
  if (m_.size() != params.size()) {
    m_ = Vector::Zero(params.size());
    v_ = Vector::Zero(params.size());
    t_ = 0;
  }
  Vector g = grad;
  if (config_.max_grad_norm > 0.0) {
    const double n = g.norm();
    if (n > config_.max_grad_norm) g *= config_.max_grad_norm / n;
  }
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * g;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  params.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

void Adam::reset() {
  m_.resize(0);
  v_.resize(0);
  t_ = 0;
}

}  // namespace robust_ctrl::nn
