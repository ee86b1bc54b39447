#include "robust_ctrl/nn/params.hpp"

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::nn {

std::size_t ParamVector::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) throw ShapeError("parameter block '" + name + "' has an empty shape");
  ParamBlock b{name, values_.size(), rows, cols};
  Vector grown = Vector::Zero(values_.size() + b.size());
  grown.head(values_.size()) = values_;
  values_ = std::move(grown);
  layout_.push_back(b);
  return layout_.size() - 1;
}

void ParamVector::set_values(const Vector& v) {
  if (v.size() != values_.size()) throw ShapeError("parameter vector size mismatch");
  values_ = v;
}

Eigen::Map<Matrix> ParamVector::block(std::size_t i) {
  const auto& b = layout_.at(i);
  return Eigen::Map<Matrix>(values_.data() + b.offset, b.rows, b.cols);
}

Eigen::Map<const Matrix> ParamVector::block(std::size_t i) const {
  const auto& b = layout_.at(i);
  return Eigen::Map<const Matrix>(values_.data() + b.offset, b.rows, b.cols);
}

BoundParams bind(Tape& tape, const ParamVector& params) {
  BoundParams out;
  out.vars.reserve(params.layout().size());
  for (std::size_t i = 0; i < params.layout().size(); ++i) out.vars.push_back(tape.leaf(params.block(i)));
  return out;
}

BoundParams bind_constant(Tape& tape, const ParamVector& params) {
  BoundParams out;
  out.vars.reserve(params.layout().size());
  for (std::size_t i = 0; i < params.layout().size(); ++i) out.vars.push_back(tape.constant(params.block(i)));
  return out;
}

Vector gather_grad(const BoundParams& bound, const ParamVector& params) {
  if (bound.vars.size() != params.layout().size()) throw ShapeError("bound parameters do not match layout");
  Vector g = Vector::Zero(params.size());
  for (std::size_t i = 0; i < bound.vars.size(); ++i) {
    const auto& b = params.layout()[i];
    const Matrix& gi = bound.vars[i].grad();
    if (gi.size() == 0) continue;  // leaf not reached by backward
    g.segment(b.offset, b.size()) = Eigen::Map<const Vector>(gi.data(), gi.size());
  }
  return g;
}

}  // namespace robust_ctrl::nn
