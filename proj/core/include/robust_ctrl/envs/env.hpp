#pragma once

// In-repo pendulum and cart-pole simulators. Each instance is one member of a
// continuous-control uncertainty set; the perturbed physical parameter is the
// ball mass for the pendulum and the pole length for the cart-pole.

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace robust_ctrl::envs {

enum class Domain { kPendulumSwingup, kCartpoleBalance, kCartpoleSwingup };

const char* to_string(Domain domain);
Domain domain_from_string(const std::string& name);

std::size_t observation_dim(Domain domain);
std::size_t state_dim(Domain domain);
inline constexpr std::size_t kActionDim = 1;

struct EnvParams {
  Domain domain = Domain::kPendulumSwingup;
  double pole_length = 0.5;  // m; for the cart-pole, the full pole length
  double ball_mass = 1.0;    // kg; pole mass for the cart-pole
  double cart_mass = 1.0;    // kg; unused by the pendulum
  double gravity = 9.81;
  double dt = 0.01;
  int frame_skip = 2;
  double actuator_limit = 1.0;  // N m (pendulum) or N (cart-pole); actions are in [-1, 1]
  int episode_length = 500;

  static EnvParams defaults(Domain domain);

  /// Value of the parameter perturbed by the uncertainty set.
  double perturbation() const;
  EnvParams with_perturbation(double value) const;
  const char* perturbed_parameter() const;

  void validate() const;
};

/// Generalized coordinates. The pendulum uses only theta and theta_dot;
/// theta = 0 is upright.
struct EnvState {
  double x = 0.0;
  double theta = 0.0;
  double x_dot = 0.0;
  double theta_dot = 0.0;
  std::uint64_t step_count = 0;

  bool operator==(const EnvState&) const = default;
};

/// Raw simulator coordinates, (theta, theta_dot) or (x, theta, x_dot, theta_dot).
std::vector<double> state_vector(Domain domain, const EnvState& state);
EnvState state_from_vector(Domain domain, std::span<const double> values,
                           std::uint64_t step_count = 0);

/// Wraps an angle into (-pi, pi]; values already inside are returned unchanged.
double wrap_angle(double theta);

/// Trig-encoded observation: pendulum (cos, sin, theta_dot), cart-pole
/// (x, cos, sin, x_dot, theta_dot).
std::vector<double> observe(Domain domain, const EnvState& state);

/// Per-step reward in [0, 1] as a function of the post-step state.
double reward(Domain domain, const EnvState& state);

struct StepResult {
  EnvState state;
  double reward = 0.0;
};

/// Generative-model interface shared by simulators and learned models: the
/// state can be set arbitrarily and then stepped.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual Domain domain() const = 0;
  virtual void set_state(const EnvState& state) = 0;
  virtual EnvState get_state() const = 0;
  virtual StepResult step(std::span<const double> action) = 0;
  virtual std::unique_ptr<DynamicsModel> clone() const = 0;

  virtual std::vector<double> observation() const { return observe(domain(), get_state()); }
};

class EnvModel final : public DynamicsModel {
 public:
  explicit EnvModel(EnvParams params, std::uint64_t rng_seed = 0);

  Domain domain() const override { return params_.domain; }
  const EnvParams& params() const { return params_; }
  std::uint64_t rng_seed() const { return rng_seed_; }

  void set_state(const EnvState& state) override;
  EnvState get_state() const override;
  StepResult step(std::span<const double> action) override;
  std::unique_ptr<DynamicsModel> clone() const override;

  /// Draws an initial state from the domain's start distribution.
  EnvState reset(std::mt19937_64& rng);
  bool episode_done() const { return state_.step_count >= static_cast<std::uint64_t>(params_.episode_length); }

  /// Mechanical energy of the current state (kinetic + potential).
  double energy() const;

 private:
  void integrate(double force);

  EnvParams params_;
  EnvState state_;
  std::uint64_t rng_seed_;
};

/// Initial-state distribution of a domain.
EnvState sample_initial_state(Domain domain, std::mt19937_64& rng);

enum class NominalChoice { kSmallest, kMedian, kLargest };
NominalChoice nominal_choice_from_string(const std::string& name);
const char* to_string(NominalChoice choice);

struct EnvSet {
  EnvModel nominal;
  std::vector<EnvModel> training_set;
  std::vector<EnvModel> holdout_set;
  std::size_t nominal_index = 0;  // position of the nominal inside training_set
};

/// One model per value, perturbing the domain's uncertainty parameter. The
/// nominal model is the smallest training value unless requested otherwise.
EnvSet make_env_set(Domain domain, std::span<const double> training_values,
                    std::span<const double> holdout_values,
                    NominalChoice nominal = NominalChoice::kSmallest,
                    const EnvParams* base = nullptr);

/// Uncertainty / holdout presets. Only pendulum and cart-pole rows are
/// simulated; the others are kept for reference.
struct PerturbationPreset {
  std::string name;
  std::string domain;
  std::vector<double> training_values;
  std::vector<double> holdout_values;
  std::string parameter;
  bool simulated = false;
};

const std::vector<PerturbationPreset>& perturbation_presets();
const PerturbationPreset& preset(const std::string& name);

}  // namespace robust_ctrl::envs
