#pragma once

// Flat parameter storage with a named block layout. Optimizers and checkpoints
// see one contiguous vector; networks view it as matrices.

#include <string>
#include <vector>

#include "robust_ctrl/nn/tape.hpp"

namespace robust_ctrl::nn {

struct ParamBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

class ParamVector {
 public:
  /// Appends a zero-initialized block and returns its index.
  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  Eigen::Index size() const { return values_.size(); }
  const std::vector<ParamBlock>& layout() const { return layout_; }

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }
  void set_values(const Vector& v);

  /// Column-major view of a block.
  Eigen::Map<Matrix> block(std::size_t i);
  Eigen::Map<const Matrix> block(std::size_t i) const;

 private:
  Vector values_;
  std::vector<ParamBlock> layout_;
};

/// Parameters placed on a tape as differentiable leaves, one per block.
struct BoundParams {
  std::vector<Var> vars;
};

BoundParams bind(Tape& tape, const ParamVector& params);
/// Same layout, but as constants: nothing flows back into `params`.
BoundParams bind_constant(Tape& tape, const ParamVector& params);
/// Flattens the gradients of bound leaves back into the layout of `params`.
/// Call after Tape::backward.
Vector gather_grad(const BoundParams& bound, const ParamVector& params);

}  // namespace robust_ctrl::nn
