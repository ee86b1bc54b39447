#include "robust_ctrl/nn/policy.hpp"

#include <cmath>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::nn {

GaussianPolicy::GaussianPolicy(PolicySpec spec) : spec_(std::move(spec)) {
  if (spec_.min_std < 0.0 || spec_.init_std <= 0.0) throw ConfigError("policy: invalid std bounds");
  net_ = Mlp(MlpSpec{spec_.obs_dim, spec_.hidden, 2 * spec_.action_dim, true, 1e-2});
}

void GaussianPolicy::init(std::mt19937_64& rng) {
  net_.init(rng);
  // softplus(pre) + min_std = init_std at zero input contribution.
  const double target = std::max(spec_.init_std - spec_.min_std, 1e-2);
  const double pre = std::log(std::expm1(target));
  auto bias = net_.params().block(net_.output_bias_block());
  bias.rightCols(spec_.action_dim).setConstant(pre);
}

DiagGaussian GaussianPolicy::distribution(const Matrix& obs) const {
  Matrix out = net_.forward(obs);
  const Eigen::Index d = spec_.action_dim;
  DiagGaussian dist;
  dist.mean = out.leftCols(d);
  if (spec_.tanh_mean) dist.mean = tanh(dist.mean);
  dist.std = (softplus(Matrix(out.rightCols(d))).array() + spec_.min_std).matrix();
  return dist;
}

GaussianPolicy::TapeOutput GaussianPolicy::forward(Var obs, const BoundParams& bound) const {
  Var out = net_.forward(obs, bound);
  const Eigen::Index d = spec_.action_dim;
  Var mean = slice_cols(out, 0, d);
  if (spec_.tanh_mean) mean = tanh(mean);
  Var std = add_scalar(softplus(slice_cols(out, d, d)), spec_.min_std);
  return {mean, std};
}

QNetwork::QNetwork(CriticSpec spec) : spec_(std::move(spec)) {
  net_ = Mlp(MlpSpec{spec_.obs_dim + spec_.action_dim, spec_.hidden, 1, true, 1.0});
}

Vector QNetwork::value(const Matrix& obs, const Matrix& actions) const {
  if (obs.rows() != actions.rows()) throw ShapeError("critic: batch sizes differ");
  Matrix in(obs.rows(), obs.cols() + actions.cols());
  in << obs, actions;
  return net_.forward(in).col(0);
}

Var QNetwork::forward(Var obs, Var actions, const BoundParams& bound) const {
  return net_.forward(concat_cols(obs, actions), bound);
}

}  // namespace robust_ctrl::nn
