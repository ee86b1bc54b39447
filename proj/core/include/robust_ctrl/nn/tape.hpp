#pragma once

// Reverse-mode automatic differentiation over dense matrices. Every node holds
// a (batch x features) matrix; a single backward pass from a 1x1 root fills the
// gradient of every node that depends on a differentiable leaf.

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace robust_ctrl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf without gradient.
  Var constant(Matrix value);
  /// Differentiable leaf.
  Var leaf(Matrix value);

  /// Backpropagates from a 1x1 root. Throws UsageError for other shapes.
  void backward(Var root);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Internal: records an op node. `backward` receives the node's upstream gradient.
  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;
  Var record(Matrix value, bool requires_grad, BackwardFn backward);
  /// Internal: adds into the gradient of `id` if it requires one.
  void accumulate(int id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise ops require equal shapes unless noted.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var square(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var elu(Var a);
Var softplus(Var a);
/// Clamps into [lo, hi]; the gradient is passed only where the input is inside.
Var clip(Var a, double lo, double hi);

/// (B x n) * (n x m).
Var matmul(Var x, Var w);
/// Adds a 1 x m row to every row of a B x m matrix.
Var add_row(Var x, Var row);
/// Multiplies every row of a B x m matrix by a 1 x m row.
Var mul_row(Var x, Var row);
/// Row-wise layer normalization with learned 1 x m gain and offset.
Var layer_norm(Var x, Var gain, Var offset, double eps = 1e-6);

/// Sum of all entries, 1 x 1.
Var sum(Var a);
Var mean(Var a);
/// Sum over columns, B x 1.
Var sum_cols(Var a);
/// Each row repeated `times` consecutively: row i becomes rows i*times .. i*times+times-1.
Var repeat_rows(Var a, Eigen::Index times);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

// Plain-matrix versions of the activations, shared with the tape-free forward path.
Matrix elu(const Matrix& x);
Matrix tanh(const Matrix& x);
Matrix softplus(const Matrix& x);
Matrix sigmoid(const Matrix& x);
Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& offset, double eps = 1e-6);

}  // namespace robust_ctrl::nn
