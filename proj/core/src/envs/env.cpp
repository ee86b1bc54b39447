#include "robust_ctrl/envs/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::envs {
namespace {

constexpr double kPi = std::numbers::pi;

// sin(theta) evaluated so that theta = +-pi gives exactly zero.
double accurate_sin(double theta) {
  if (theta > kPi / 2) return std::sin(kPi - theta);
  if (theta < -kPi / 2) return -std::sin(theta + kPi);
  return std::sin(theta);
}

// Smooth bump: 1 at zero, 1/2 at |v| = scale.
double lorentz(double v, double scale) {
  const double z = v / scale;
  return 1.0 / (1.0 + z * z);
}

bool finite(const EnvState& s) {
  return std::isfinite(s.x) && std::isfinite(s.theta) && std::isfinite(s.x_dot) &&
         std::isfinite(s.theta_dot);
}

}  // namespace

const char* to_string(Domain domain) {
  switch (domain) {
    case Domain::kPendulumSwingup:
      return "pendulum_swingup";
    case Domain::kCartpoleBalance:
      return "cartpole_balance";
    case Domain::kCartpoleSwingup:
      return "cartpole_swingup";
  }
  return "unknown";
}

Domain domain_from_string(const std::string& name) {
  if (name == "pendulum_swingup") return Domain::kPendulumSwingup;
  if (name == "cartpole_balance") return Domain::kCartpoleBalance;
  if (name == "cartpole_swingup") return Domain::kCartpoleSwingup;
  throw ConfigError("unknown domain '" + name + "'");
}

std::size_t observation_dim(Domain domain) {
  return domain == Domain::kPendulumSwingup ? 3 : 5;
}

std::size_t state_dim(Domain domain) { return domain == Domain::kPendulumSwingup ? 2 : 4; }

EnvParams EnvParams::defaults(Domain domain) {
  EnvParams p;
  p.domain = domain;
  switch (domain) {
    case Domain::kPendulumSwingup:
      p.pole_length = 0.5;
      p.ball_mass = 1.0;
      p.actuator_limit = 1.0;
      break;
    case Domain::kCartpoleBalance:
      p.pole_length = 1.0;
      p.ball_mass = 0.1;
      p.cart_mass = 1.0;
      p.actuator_limit = 10.0;
      break;
    case Domain::kCartpoleSwingup:
      p.pole_length = 1.0;
      p.ball_mass = 0.1;
      p.cart_mass = 1.0;
      p.actuator_limit = 10.0;
      break;
  }
  return p;
}

double EnvParams::perturbation() const {
  return domain == Domain::kPendulumSwingup ? ball_mass : pole_length;
}

EnvParams EnvParams::with_perturbation(double value) const {
  EnvParams p = *this;
  if (domain == Domain::kPendulumSwingup) {
    p.ball_mass = value;
  } else {
    p.pole_length = value;
  }
  return p;
}

const char* EnvParams::perturbed_parameter() const {
  return domain == Domain::kPendulumSwingup ? "ball_mass" : "pole_length";
}

void EnvParams::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(std::isfinite(v) && v > 0.0)) throw ConfigError(std::string(what) + " must be > 0");
  };
  positive(pole_length, "pole_length");
  positive(ball_mass, "ball_mass");
  positive(cart_mass, "cart_mass");
  positive(gravity, "gravity");
  positive(actuator_limit, "actuator_limit");
  if (!(dt > 0.0 && dt <= 0.05)) throw ConfigError("dt must lie in (0, 0.05]");
  if (frame_skip < 1) throw ConfigError("frame_skip must be >= 1");
  if (episode_length < 1) throw ConfigError("episode_length must be >= 1");
}

double wrap_angle(double theta) {
  if (theta > -kPi && theta <= kPi) return theta;
  double w = std::remainder(theta, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

std::vector<double> state_vector(Domain domain, const EnvState& s) {
  if (domain == Domain::kPendulumSwingup) return {s.theta, s.theta_dot};
  return {s.x, s.theta, s.x_dot, s.theta_dot};
}

EnvState state_from_vector(Domain domain, std::span<const double> v, std::uint64_t step_count) {
  if (v.size() != state_dim(domain)) throw ShapeError("state vector has the wrong length");
  EnvState s;
  if (domain == Domain::kPendulumSwingup) {
    s.theta = v[0];
    s.theta_dot = v[1];
  } else {
    s.x = v[0];
    s.theta = v[1];
    s.x_dot = v[2];
    s.theta_dot = v[3];
  }
  s.step_count = step_count;
  return s;
}

std::vector<double> observe(Domain domain, const EnvState& s) {
  const double theta = wrap_angle(s.theta);
  if (domain == Domain::kPendulumSwingup) return {std::cos(theta), accurate_sin(theta), s.theta_dot};
  return {s.x, std::cos(theta), accurate_sin(theta), s.x_dot, s.theta_dot};
}

double reward(Domain domain, const EnvState& s) {
  const double c = std::cos(s.theta);
  if (domain == Domain::kPendulumSwingup) {
    // Flat at 1 inside |theta| < 0.1 rad, polynomial falloff to 0 when hanging.
    static const double kInner = 1.0 + std::cos(0.1);
    const double ratio = std::min(1.0, (1.0 + c) / kInner);
    const double r2 = ratio * ratio;
    return r2 * r2;
  }
  // Cart-pole: upright term times centering and slow-pole factors, each in [1/2, 1]
  // except the upright term which reaches 0 when hanging.
  const double upright = (1.0 + c) / 2.0;
  const double centered = (1.0 + lorentz(s.x, 2.0)) / 2.0;
  const double slow = (1.0 + lorentz(s.theta_dot, 5.0)) / 2.0;
  return upright * centered * slow;
}

EnvModel::EnvModel(EnvParams params, std::uint64_t rng_seed)
    : params_(params), rng_seed_(rng_seed) {
  params_.validate();
  if (params_.domain == Domain::kCartpoleSwingup) state_.theta = kPi;
}

void EnvModel::set_state(const EnvState& state) {
  if (!finite(state)) throw PhysicsError("refusing to set a non-finite state");
  state_ = state;
}

EnvState EnvModel::get_state() const {
  EnvState s = state_;
  s.theta = wrap_angle(s.theta);
  return s;
}

std::unique_ptr<DynamicsModel> EnvModel::clone() const { return std::make_unique<EnvModel>(*this); }

void EnvModel::integrate(double force) {
  const double g = params_.gravity;
  const double dt = params_.dt;
  EnvState& s = state_;
  if (params_.domain == Domain::kPendulumSwingup) {
    const double l = params_.pole_length;
    const double m = params_.ball_mass;
    const double theta_acc = g / l * accurate_sin(s.theta) + force / (m * l * l);
    s.theta_dot += dt * theta_acc;
    s.theta = wrap_angle(s.theta + dt * s.theta_dot);
    return;
  }
  // Cart-pole with the pole modelled as a uniform rod; l is the half length.
  const double l = 0.5 * params_.pole_length;
  const double mp = params_.ball_mass;
  const double total = params_.cart_mass + mp;
  const double sin_t = accurate_sin(s.theta);
  const double cos_t = std::cos(s.theta);
  const double temp = (force + mp * l * s.theta_dot * s.theta_dot * sin_t) / total;
  const double theta_acc =
      (g * sin_t - cos_t * temp) / (l * (4.0 / 3.0 - mp * cos_t * cos_t / total));
  const double x_acc = temp - mp * l * theta_acc * cos_t / total;
  s.x_dot += dt * x_acc;
  s.theta_dot += dt * theta_acc;
  s.x += dt * s.x_dot;
  s.theta = wrap_angle(s.theta + dt * s.theta_dot);
}

StepResult EnvModel::step(std::span<const double> action) {
  if (action.size() != kActionDim) throw ShapeError("expected a one-dimensional action");
  double u = action[0];
  if (std::isnan(u)) throw PhysicsError("NaN action");
  u = std::clamp(u, -1.0, 1.0);
  const double force = u * params_.actuator_limit;
  for (int i = 0; i < params_.frame_skip; ++i) integrate(force);
  if (!finite(state_)) throw PhysicsError("simulator state became non-finite");
  ++state_.step_count;
  return StepResult{state_, reward(params_.domain, state_)};
}

EnvState EnvModel::reset(std::mt19937_64& rng) {
  state_ = sample_initial_state(params_.domain, rng);
  return state_;
}

double EnvModel::energy() const {
  const double g = params_.gravity;
  const EnvState& s = state_;
  if (params_.domain == Domain::kPendulumSwingup) {
    const double l = params_.pole_length;
    const double m = params_.ball_mass;
    return 0.5 * m * l * l * s.theta_dot * s.theta_dot + m * g * l * std::cos(s.theta);
  }
  const double l = 0.5 * params_.pole_length;
  const double mp = params_.ball_mass;
  const double mc = params_.cart_mass;
  // Rod centre-of-mass velocity plus rotational energy about the centre.
  const double vx = s.x_dot + l * std::cos(s.theta) * s.theta_dot;
  const double vy = -l * std::sin(s.theta) * s.theta_dot;
  const double inertia = mp * (2.0 * l) * (2.0 * l) / 12.0;
  return 0.5 * mc * s.x_dot * s.x_dot + 0.5 * mp * (vx * vx + vy * vy) +
         0.5 * inertia * s.theta_dot * s.theta_dot + mp * g * l * std::cos(s.theta);
}

EnvState sample_initial_state(Domain domain, std::mt19937_64& rng) {
  EnvState s;
  switch (domain) {
    case Domain::kPendulumSwingup: {
      std::uniform_real_distribution<double> angle(-kPi, kPi);
      s.theta = wrap_angle(angle(rng));
      if (s.theta == -kPi) s.theta = kPi;
      break;
    }
    case Domain::kCartpoleBalance: {
      std::uniform_real_distribution<double> small(-0.1, 0.1);
      s.x = small(rng);
      s.theta = small(rng);
      s.x_dot = small(rng);
      s.theta_dot = small(rng);
      break;
    }
    case Domain::kCartpoleSwingup: {
      std::uniform_real_distribution<double> small(-0.05, 0.05);
      s.x = small(rng);
      s.theta = wrap_angle(kPi + small(rng));
      s.x_dot = small(rng);
      s.theta_dot = small(rng);
      break;
    }
  }
  return s;
}

NominalChoice nominal_choice_from_string(const std::string& name) {
  if (name == "smallest") return NominalChoice::kSmallest;
  if (name == "median") return NominalChoice::kMedian;
  if (name == "largest") return NominalChoice::kLargest;
  throw ConfigError("unknown nominal choice '" + name + "'");
}

const char* to_string(NominalChoice choice) {
  switch (choice) {
    case NominalChoice::kSmallest:
      return "smallest";
    case NominalChoice::kMedian:
      return "median";
    case NominalChoice::kLargest:
      return "largest";
  }
  return "unknown";
}

EnvSet make_env_set(Domain domain, std::span<const double> training_values,
                    std::span<const double> holdout_values, NominalChoice nominal,
                    const EnvParams* base) {
  if (training_values.empty()) throw ConfigError("training set must not be empty");
  if (holdout_values.empty()) throw ConfigError("holdout set must not be empty");
  EnvParams params = base ? *base : EnvParams::defaults(domain);
  if (params.domain != domain) throw ConfigError("base parameters belong to another domain");

  auto build = [&](std::span<const double> values) {
    std::vector<EnvModel> models;
    for (double v : values) {
      if (!(std::isfinite(v) && v > 0.0)) throw ConfigError("perturbation values must be > 0");
      models.emplace_back(params.with_perturbation(v));
    }
    return models;
  };
  auto training = build(training_values);
  auto holdout = build(holdout_values);

  std::vector<std::size_t> order(training_values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return training_values[a] < training_values[b]; });
  std::size_t idx = order.front();
  if (nominal == NominalChoice::kMedian) idx = order[(order.size() - 1) / 2];
  if (nominal == NominalChoice::kLargest) idx = order.back();

  EnvModel nominal_model = training[idx];
  return EnvSet{std::move(nominal_model), std::move(training), std::move(holdout), idx};
}

const std::vector<PerturbationPreset>& perturbation_presets() {
  static const std::vector<PerturbationPreset> presets = {
      {"acrobot", "acrobot", {1.0, 1.025, 1.05}, {1.15, 1.2, 1.25}, "first_pole_length", false},
      {"cartpole_balance", "cartpole_balance", {0.5, 1.9, 2.1}, {2.0, 2.2, 2.3}, "pole_length", true},
      {"cartpole_swingup", "cartpole_swingup", {1.0, 1.4, 1.7}, {1.2, 1.5, 1.8}, "pole_length", true},
      {"cheetah_run", "cheetah_run", {0.4, 0.45, 0.5}, {0.3, 0.325, 0.35}, "torso_length", false},
      {"hopper_hop", "hopper_hop", {-0.32, -0.33, -0.34}, {-0.4, -0.45, -0.5}, "calf_length", false},
      {"hopper_stand", "hopper_stand", {-0.32, -0.33, -0.34}, {-0.4, -0.475, -0.5}, "calf_length", false},
      {"pendulum_swingup", "pendulum_swingup", {1.0, 1.1, 1.4}, {1.5, 1.6, 1.7}, "ball_mass", true},
      {"walker_run", "walker_run", {0.225, 0.2375, 0.25}, {0.35, 0.375, 0.4}, "thigh_length", false},
      {"walker_walk", "walker_walk", {0.225, 0.2375, 0.25}, {0.35, 0.375, 0.4}, "thigh_length", false},
      {"shadow_hand", "shadow_hand", {0.025, 0.022, 0.02}, {0.021, 0.018, 0.015}, "half_cube_width", false},
      {"cartpole_balance_larger_test_set", "cartpole_balance", {0.5, 1.9, 2.1},
       {0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9}, "pole_length", true},
      {"pendulum_swingup_larger_test_set", "pendulum_swingup", {1.0, 1.1, 1.4},
       {1.0, 1.1, 1.2, 1.3, 1.4, 1.5}, "ball_mass", true},
      {"pendulum_swingup_offline", "pendulum_swingup", {1.0, 1.1, 1.2}, {1.5, 1.6, 1.7}, "ball_mass", true},
      {"cartpole_swingup_offline", "cartpole_swingup", {1.0, 1.4, 1.7}, {1.2, 1.5, 1.8}, "pole_length", true},
  };
  return presets;
}

const PerturbationPreset& preset(const std::string& name) {
  for (const auto& p : perturbation_presets()) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown perturbation preset '" + name + "'");
}

}  // namespace robust_ctrl::envs
