#pragma once

// Diagonal Gaussian distributions over a batch: row b holds the mean and
// standard deviation of one state's action distribution.

#include "robust_ctrl/nn/tape.hpp"

namespace robust_ctrl::nn {

struct DiagGaussian {
  Matrix mean;  // batch x d
  Matrix std;   // batch x d, strictly positive

  Eigen::Index batch() const { return mean.rows(); }
  Eigen::Index dim() const { return mean.cols(); }
};

/// Per-row log density of `actions` (batch x d).
Vector log_prob(const DiagGaussian& dist, const Matrix& actions);
Vector entropy(const DiagGaussian& dist);
/// mean + std * noise, noise ~ N(0, I) supplied by the caller.
Matrix sample(const DiagGaussian& dist, const Matrix& noise);

/// Per-row KL(p || q).
Vector kl(const DiagGaussian& p, const DiagGaussian& q);
/// Decoupled parts: kl_mean uses q's std for both, kl_cov uses p's mean for both.
Vector kl_mean(const DiagGaussian& p, const DiagGaussian& q);
Vector kl_cov(const DiagGaussian& p, const DiagGaussian& q);

// Differentiable versions; the mean and std are tape variables.
Var log_prob(Var mean, Var std, const Matrix& actions);
Var entropy(Var std);
/// KL(p || q) with p fixed and q = N(mean, std) on the tape, batch x 1.
Var kl(const DiagGaussian& p, Var mean, Var std);

}  // namespace robust_ctrl::nn
