#pragma once

// E-step of MPO: nonparametric sample weights q_ij proportional to
// exp(Q_ij / eta), with eta the minimizer of the temperature dual
//   g(eta) = eta * epsilon + eta * mean_j log mean_i exp(Q_ij / eta).

#include "robust_ctrl/nn/tape.hpp"

namespace robust_ctrl::mpo {

struct EStepResult {
  nn::Matrix weights;  // K x N, rows sum to one
  double eta = 0.0;
  /// Mean over states of KL(q_j || uniform over the N samples).
  double kl = 0.0;
  bool fallback = false;
};

inline constexpr double kEtaMin = 1e-6;
inline constexpr double kEtaMax = 1e3;

double temperature_dual(const nn::Matrix& q_values, double epsilon, double eta);

/// Minimizes the dual over [kEtaMin, kEtaMax] starting from `eta_init`. A
/// non-finite result falls back to `eta_init` and sets `fallback`.
EStepResult e_step_weights(const nn::Matrix& q_values, double epsilon, double eta_init = 1.0);

/// Row-wise softmax of Q / eta with max-shift.
nn::Matrix softmax_weights(const nn::Matrix& q_values, double eta);

}  // namespace robust_ctrl::mpo
