#pragma once

// Gaussian policy and Q-function heads on top of Mlp.

#include <random>

#include "robust_ctrl/nn/gaussian.hpp"
#include "robust_ctrl/nn/mlp.hpp"

namespace robust_ctrl::nn {

struct PolicySpec {
  Eigen::Index obs_dim = 0;
  Eigen::Index action_dim = 1;
  std::vector<Eigen::Index> hidden{64, 64};
  bool tanh_mean = true;
  /// Lower bound on the standard deviation, added after the softplus.
  double min_std = 1e-3;
  double init_std = 0.3;
};

class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  explicit GaussianPolicy(PolicySpec spec);

  const PolicySpec& spec() const { return spec_; }
  ParamVector& params() { return net_.params(); }
  const ParamVector& params() const { return net_.params(); }

  void init(std::mt19937_64& rng);

  DiagGaussian distribution(const Matrix& obs) const;

  struct TapeOutput {
    Var mean;
    Var std;
  };
  TapeOutput forward(Var obs, const BoundParams& bound) const;

 private:
  PolicySpec spec_;
  Mlp net_;
};

struct CriticSpec {
  Eigen::Index obs_dim = 0;
  Eigen::Index action_dim = 1;
  std::vector<Eigen::Index> hidden{64, 64};
};

class QNetwork {
 public:
  QNetwork() = default;
  explicit QNetwork(CriticSpec spec);

  const CriticSpec& spec() const { return spec_; }
  ParamVector& params() { return net_.params(); }
  const ParamVector& params() const { return net_.params(); }

  void init(std::mt19937_64& rng) { net_.init(rng); }

  /// Q(s, a) for each row, batch x 1.
  Vector value(const Matrix& obs, const Matrix& actions) const;
  Var forward(Var obs, Var actions, const BoundParams& bound) const;

 private:
  CriticSpec spec_;
  Mlp net_;
};

}  // namespace robust_ctrl::nn
