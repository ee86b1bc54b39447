#include "robust_ctrl/nn/tape.hpp"

#include <cmath>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::nn {
namespace {

void check_same_shape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw UsageError(std::string(op) + ": operands live on different tapes");
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}

bool any_grad(Var a) { return a.tape->requires_grad(a.id); }
bool any_grad(Var a, Var b) { return any_grad(a) || any_grad(b); }

}  // namespace

const Matrix& Var::value() const { return tape->value(id); }
const Matrix& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::leaf(Matrix value) { return record(std::move(value), true, nullptr); }

Var Tape::record(Matrix value, bool requires_grad, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  n.grad += g;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw UsageError("root belongs to another tape");
  const Matrix& v = nodes_[root.id].value;
  if (v.rows() != 1 || v.cols() != 1) throw UsageError("backward needs a scalar (1x1) root");
  for (int i = 0; i <= root.id; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  if (!nodes_[root.id].requires_grad) return;
  nodes_[root.id].grad(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, n.grad);
  }
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() + b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() - b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value().cwiseProduct(b.value()), any_grad(a, b),
                        [ia, ib](Tape& t, const Matrix& g) {
                          if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                          if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                        });
}

Var div(Var a, Var b) {
  check_same_shape(a, b, "div");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value().cwiseQuotient(b.value()), any_grad(a, b),
                        [ia, ib](Tape& t, const Matrix& g) {
                          const Matrix& vb = t.value(ib);
                          if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseQuotient(vb));
                          if (t.requires_grad(ib)) {
                            t.accumulate(ib, -g.cwiseProduct(t.value(ia)).cwiseQuotient(vb.cwiseProduct(vb)));
                          }
                        });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  const int ia = a.id;
  return a.tape->record(a.value() * c, any_grad(a),
                        [ia, c](Tape& t, const Matrix& g) { t.accumulate(ia, g * c); });
}

Var add_scalar(Var a, double c) {
  const int ia = a.id;
  return a.tape->record(a.value().array() + c, any_grad(a),
                        [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var square(Var a) {
  const int ia = a.id;
  return a.tape->record(a.value().array().square().matrix(), any_grad(a),
                        [ia](Tape& t, const Matrix& g) {
                          t.accumulate(ia, 2.0 * g.cwiseProduct(t.value(ia)));
                        });
}

Var exp(Var a) {
  const int ia = a.id;
  Matrix out = a.value().array().exp().matrix();
  Matrix deriv = out;
  return a.tape->record(std::move(out), any_grad(a),
                        [ia, deriv = std::move(deriv)](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g.cwiseProduct(deriv));
                        });
}

Var log(Var a) {
  const int ia = a.id;
  return a.tape->record(a.value().array().log().matrix(), any_grad(a),
                        [ia](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g.cwiseQuotient(t.value(ia)));
                        });
}

Var tanh(Var a) {
  const int ia = a.id;
  Matrix out = tanh(a.value());
  Matrix deriv = (1.0 - out.array().square()).matrix();
  return a.tape->record(std::move(out), any_grad(a),
                        [ia, deriv = std::move(deriv)](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g.cwiseProduct(deriv));
                        });
}

// Both activations go through the vectorized exp; absolute error stays near
// machine epsilon.
Matrix elu(const Matrix& x) {
  return (x.array().max(0.0) + (x.array().min(0.0).exp() - 1.0)).matrix();
}

Matrix tanh(const Matrix& x) {
  return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix();
}

Matrix softplus(const Matrix& x) {
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|}).
  return x.unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Var elu(Var a) {
  const int ia = a.id;
  Matrix out = elu(a.value());
  // 1 for x > 0, exp(x) = elu(x) + 1 otherwise.
  Matrix deriv = (out.array().min(0.0) + 1.0).matrix();
  return a.tape->record(std::move(out), any_grad(a),
                        [ia, deriv = std::move(deriv)](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g.cwiseProduct(deriv));
                        });
}

Var softplus(Var a) {
  const int ia = a.id;
  return a.tape->record(softplus(a.value()), any_grad(a), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(sigmoid(t.value(ia))));
  });
}

Var clip(Var a, double lo, double hi) {
  const int ia = a.id;
  const Matrix& v = a.value();
  Matrix inside = ((v.array() >= lo) && (v.array() <= hi)).cast<double>().matrix();
  return a.tape->record(v.cwiseMax(lo).cwiseMin(hi), any_grad(a),
                        [ia, inside = std::move(inside)](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g.cwiseProduct(inside));
                        });
}

Var matmul(Var x, Var w) {
  if (x.tape != w.tape) throw UsageError("matmul: operands live on different tapes");
  if (x.cols() != w.rows()) throw ShapeError("matmul: inner dimensions differ");
  const int ix = x.id, iw = w.id;
  return x.tape->record(x.value() * w.value(), any_grad(x, w), [ix, iw](Tape& t, const Matrix& g) {
    if (t.requires_grad(ix)) t.accumulate(ix, g * t.value(iw).transpose());
    if (t.requires_grad(iw)) t.accumulate(iw, t.value(ix).transpose() * g);
  });
}

Var add_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw ShapeError("add_row: bad row shape");
  const int ix = x.id, ir = row.id;
  Matrix out = x.value().rowwise() + row.value().row(0);
  return x.tape->record(std::move(out), any_grad(x, row), [ix, ir](Tape& t, const Matrix& g) {
    t.accumulate(ix, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var mul_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw ShapeError("mul_row: bad row shape");
  const int ix = x.id, ir = row.id;
  Matrix out = x.value().array().rowwise() * row.value().row(0).array();
  return x.tape->record(std::move(out), any_grad(x, row), [ix, ir](Tape& t, const Matrix& g) {
    if (t.requires_grad(ix)) {
      t.accumulate(ix, (g.array().rowwise() * t.value(ir).row(0).array()).matrix());
    }
    if (t.requires_grad(ir)) t.accumulate(ir, g.cwiseProduct(t.value(ix)).colwise().sum());
  });
}

namespace {

// Row means via a matrix-vector product; much faster than rowwise() on
// column-major storage.
Vector row_mean(const Matrix& x) { return x * Vector::Constant(x.cols(), 1.0 / static_cast<double>(x.cols())); }

struct Normalized {
  Matrix normed;
  Vector inv_std;
};

Normalized normalize_rows(const Matrix& x, double eps) {
  Normalized n;
  n.normed = x.colwise() - row_mean(x);
  n.inv_std = (row_mean(n.normed.array().square().matrix()).array() + eps).rsqrt().matrix();
  n.normed = n.normed.array().colwise() * n.inv_std.array();
  return n;
}

Matrix scale_shift(const Matrix& normed, const Matrix& gain, const Matrix& offset) {
  return ((normed.array().rowwise() * gain.row(0).array()).rowwise() + offset.row(0).array()).matrix();
}

}  // namespace

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& offset, double eps) {
  return scale_shift(normalize_rows(x, eps).normed, gain, offset);
}

Var layer_norm(Var x, Var gain, Var offset, double eps) {
  const Eigen::Index m = x.cols();
  if (gain.rows() != 1 || gain.cols() != m || offset.rows() != 1 || offset.cols() != m) {
    throw ShapeError("layer_norm: gain/offset must be 1 x features");
  }
  Normalized n = normalize_rows(x.value(), eps);
  Matrix out = scale_shift(n.normed, gain.value(), offset.value());
  const int ix = x.id, ig = gain.id, io = offset.id;
  const bool rg = any_grad(x) || any_grad(gain) || any_grad(offset);
  return x.tape->record(std::move(out), rg, [ix, ig, io, n = std::move(n)](Tape& t, const Matrix& g) {
    if (t.requires_grad(io)) t.accumulate(io, g.colwise().sum());
    if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(n.normed).colwise().sum());
    if (t.requires_grad(ix)) {
      // dx = inv_std * (dn - mean(dn) - normed * mean(dn * normed)), row-wise.
      Matrix dn = g.array().rowwise() * t.value(ig).row(0).array();
      const Vector mean_dn = row_mean(dn);
      const Vector mean_dn_n = row_mean(dn.cwiseProduct(n.normed));
      Matrix dx = (dn.colwise() - mean_dn) - (n.normed.array().colwise() * mean_dn_n.array()).matrix();
      dx = dx.array().colwise() * n.inv_std.array();
      t.accumulate(ix, dx);
    }
  });
}

Var sum(Var a) {
  const int ia = a.id;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape->record(std::move(out), any_grad(a), [ia, r, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_cols(Var a) {
  const int ia = a.id;
  const Eigen::Index c = a.cols();
  return a.tape->record(a.value().rowwise().sum(), any_grad(a), [ia, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.replicate(1, c));
  });
}

Var repeat_rows(Var a, Eigen::Index times) {
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix out(r * times, c);
  for (Eigen::Index i = 0; i < r; ++i) out.middleRows(i * times, times) = a.value().row(i).replicate(times, 1);
  const int ia = a.id;
  return a.tape->record(std::move(out), any_grad(a), [ia, r, c, times](Tape& t, const Matrix& g) {
    Matrix back(r, c);
    for (Eigen::Index i = 0; i < r; ++i) back.row(i) = g.middleRows(i * times, times).colwise().sum();
    t.accumulate(ia, back);
  });
}

Var concat_cols(Var a, Var b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const int ia = a.id, ib = b.id;
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return a.tape->record(std::move(out), any_grad(a, b), [ia, ib, ca, cb](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.leftCols(ca));
    if (t.requires_grad(ib)) t.accumulate(ib, g.rightCols(cb));
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  const int ia = a.id;
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape->record(a.value().middleCols(start, count), any_grad(a),
                        [ia, r, c, start, count](Tape& t, const Matrix& g) {
                          Matrix back = Matrix::Zero(r, c);
                          back.middleCols(start, count) = g;
                          t.accumulate(ia, back);
                        });
}

}  // namespace robust_ctrl::nn
