#include "robust_ctrl/mpo/e_step.hpp"

#include <algorithm>
#include <cmath>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::mpo {
namespace {

struct DualDerivatives {
  double d1 = 0.0;
  double d2 = 0.0;
};

// g'(eta) = eps + mean_j [lme_j - E_q[Q_j] / eta];  g''(eta) = mean_j Var_q[Q_j] / eta^3.
DualDerivatives dual_derivatives(const nn::Matrix& q, double epsilon, double eta) {
  const double n = static_cast<double>(q.cols());
  DualDerivatives d;
  d.d1 = epsilon;
  for (Eigen::Index j = 0; j < q.rows(); ++j) {
    const double shift = q.row(j).maxCoeff();
    const Eigen::ArrayXd w = ((q.row(j).array() - shift) / eta).exp();
    const double z = w.sum();
    const double lme = shift / eta + std::log(z / n);
    const double mean_q = (w * q.row(j).transpose().array()).sum() / z;
    const double var_q = (w * (q.row(j).transpose().array() - mean_q).square()).sum() / z;
    d.d1 += (lme - mean_q / eta) / static_cast<double>(q.rows());
    d.d2 += var_q / (eta * eta * eta) / static_cast<double>(q.rows());
  }
  return d;
}

}  // namespace

double temperature_dual(const nn::Matrix& q, double epsilon, double eta) {
  const double n = static_cast<double>(q.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < q.rows(); ++j) {
    const double shift = q.row(j).maxCoeff();
    const double z = ((q.row(j).array() - shift) / eta).exp().sum();
    total += shift / eta + std::log(z / n);
  }
  return eta * epsilon + eta * total / static_cast<double>(q.rows());
}

nn::Matrix softmax_weights(const nn::Matrix& q, double eta) {
  nn::Matrix w(q.rows(), q.cols());
  for (Eigen::Index j = 0; j < q.rows(); ++j) {
    const double shift = q.row(j).maxCoeff();
    w.row(j) = ((q.row(j).array() - shift) / eta).exp().matrix();
    w.row(j) /= w.row(j).sum();
  }
  return w;
}

EStepResult e_step_weights(const nn::Matrix& q, double epsilon, double eta_init) {
  if (q.rows() == 0 || q.cols() == 0) throw ShapeError("e_step: empty Q table");
  if (!(epsilon > 0.0)) throw ConfigError("e_step: epsilon must be positive");
  EStepResult res;
  if (!q.allFinite()) {
    res.fallback = true;
    res.eta = eta_init;
    res.weights = nn::Matrix::Constant(q.rows(), q.cols(), 1.0 / static_cast<double>(q.cols()));
    return res;
  }

  // g is convex in eta, so g' is nondecreasing: safeguarded Newton on g'.
  double lo = kEtaMin, hi = kEtaMax;
  double eta = std::clamp(std::isfinite(eta_init) ? eta_init : 1.0, lo, hi);
  if (dual_derivatives(q, epsilon, hi).d1 <= 0.0) {
    eta = hi;
  } else if (dual_derivatives(q, epsilon, lo).d1 >= 0.0) {
    eta = lo;
  } else {
    for (int it = 0; it < 200; ++it) {
      const auto d = dual_derivatives(q, epsilon, eta);
      if (!std::isfinite(d.d1)) break;
      if (std::abs(d.d1) < 1e-12 * (1.0 + epsilon)) break;
      if (d.d1 > 0.0) {
        hi = eta;
      } else {
        lo = eta;
      }
      double next = d.d2 > 0.0 ? eta - d.d1 / d.d2 : -1.0;
      if (!(next > lo && next < hi)) next = std::sqrt(lo * hi);
      if (hi / lo - 1.0 < 1e-12) break;
      eta = next;
    }
  }
  if (!std::isfinite(eta)) {
    res.fallback = true;
    eta = eta_init;
  }
  res.eta = eta;
  res.weights = softmax_weights(q, eta);
  const double n = static_cast<double>(q.cols());
  double kl = 0.0;
  for (Eigen::Index j = 0; j < q.rows(); ++j) {
    for (Eigen::Index i = 0; i < q.cols(); ++i) {
      const double w = res.weights(j, i);
      if (w > 0.0) kl += w * std::log(w * n);
    }
  }
  res.kl = kl / static_cast<double>(q.rows());
  return res;
}

}  // namespace robust_ctrl::mpo
