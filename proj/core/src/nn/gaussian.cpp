#include "robust_ctrl/nn/gaussian.hpp"

#include <cmath>
#include <numbers>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::nn {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check(const DiagGaussian& d) {
  if (d.mean.rows() != d.std.rows() || d.mean.cols() != d.std.cols()) {
    throw ShapeError("gaussian: mean and std shapes differ");
  }
  if ((d.std.array() <= 0.0).any()) throw DomainError("gaussian: std must be positive");
}

void check_pair(const DiagGaussian& p, const DiagGaussian& q) {
  check(p);
  check(q);
  if (p.mean.rows() != q.mean.rows() || p.mean.cols() != q.mean.cols()) {
    throw ShapeError("gaussian: distributions have different shapes");
  }
}

}  // namespace

Vector log_prob(const DiagGaussian& dist, const Matrix& actions) {
  check(dist);
  if (actions.rows() != dist.batch() || actions.cols() != dist.dim()) throw ShapeError("log_prob: shape");
  const auto z = (actions - dist.mean).array() / dist.std.array();
  return (-0.5 * z.square() - dist.std.array().log() - 0.5 * kLog2Pi).rowwise().sum();
}

Vector entropy(const DiagGaussian& dist) {
  check(dist);
  return (dist.std.array().log() + 0.5 * (1.0 + kLog2Pi)).rowwise().sum();
}

Matrix sample(const DiagGaussian& dist, const Matrix& noise) {
  check(dist);
  if (noise.rows() != dist.batch() || noise.cols() != dist.dim()) throw ShapeError("sample: noise shape");
  return dist.mean + dist.std.cwiseProduct(noise);
}

Vector kl_mean(const DiagGaussian& p, const DiagGaussian& q) {
  check_pair(p, q);
  return ((p.mean - q.mean).array().square() / (2.0 * q.std.array().square())).rowwise().sum();
}

Vector kl_cov(const DiagGaussian& p, const DiagGaussian& q) {
  check_pair(p, q);
  const auto r = p.std.array() / q.std.array();
  return (-r.log() + 0.5 * r.square() - 0.5).rowwise().sum();
}

Vector kl(const DiagGaussian& p, const DiagGaussian& q) { return kl_mean(p, q) + kl_cov(p, q); }

Var log_prob(Var mean, Var std, const Matrix& actions) {
  Tape& t = *mean.tape;
  Var z = (t.constant(actions) - mean) / std;
  Var per = add_scalar(scale(square(z), -0.5) - log(std), -0.5 * kLog2Pi);
  return sum_cols(per);
}

Var entropy(Var std) {
  return sum_cols(add_scalar(log(std), 0.5 * (1.0 + kLog2Pi)));
}

Var kl(const DiagGaussian& p, Var mean, Var std) {
  check(p);
  Tape& t = *mean.tape;
  Var diff = t.constant(p.mean) - mean;
  Var var_q = square(std);
  Var pm = t.constant(p.std.array().square().matrix());
  // log(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2
  Var per = log(std) - t.constant(p.std.array().log().matrix()) +
            scale((pm + square(diff)) / var_q, 0.5);
  return sum_cols(add_scalar(per, -0.5));
}

}  // namespace robust_ctrl::nn
