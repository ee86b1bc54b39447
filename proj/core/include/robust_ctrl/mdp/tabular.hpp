#pragma once

// Tabular robust MDPs with finite, (s,a)-rectangular uncertainty sets and the
// fixed-policy / optimal Bellman operators in their non-robust, robust and
// soft-robust forms, optionally regularized by tau * KL(pi || reference).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace robust_ctrl::mdp {

enum class Mode { kNonRobust, kRobust, kSoftRobust };

const char* to_string(Mode mode);
Mode mode_from_string(const std::string& name);

/// Finite MDP without its dynamics: S, A, r and gamma. Rewards are stored
/// row-major as reward[s * n_actions + a].
class TabularMdp {
 public:
  TabularMdp(std::size_t n_states, std::size_t n_actions, std::vector<double> reward,
             double discount);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double discount() const { return discount_; }
  double reward(std::size_t s, std::size_t a) const { return reward_[s * n_actions_ + a]; }
  const std::vector<double>& rewards() const { return reward_; }
  double max_abs_reward() const;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> reward_;
  double discount_;
};

/// One transition kernel, probs[(s * n_actions + a) * n_states + s'].
class Kernel {
 public:
  Kernel(std::size_t n_states, std::size_t n_actions, std::vector<double> probs);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  std::span<const double> row(std::size_t s, std::size_t a) const {
    return {probs_.data() + (s * n_actions_ + a) * n_states_, n_states_};
  }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> probs_;
};

/// Finite list of kernels plus the weights w used by the soft-robust operator.
class UncertaintySet {
 public:
  /// Uniform weights.
  explicit UncertaintySet(std::vector<Kernel> kernels);
  UncertaintySet(std::vector<Kernel> kernels, std::vector<double> weights);

  std::size_t size() const { return kernels_.size(); }
  const Kernel& kernel(std::size_t i) const { return kernels_[i]; }
  const std::vector<Kernel>& kernels() const { return kernels_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Weighted average model p-bar.
  Kernel average_kernel() const;

 private:
  std::vector<Kernel> kernels_;
  std::vector<double> weights_;
};

using ValueFunction = std::vector<double>;

class TabularPolicy {
 public:
  TabularPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs);
  static TabularPolicy uniform(std::size_t n_states, std::size_t n_actions);
  static TabularPolicy deterministic(std::size_t n_actions, std::span<const std::size_t> actions);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double prob(std::size_t s, std::size_t a) const { return probs_[s * n_actions_ + a]; }
  std::span<const double> row(std::size_t s) const {
    return {probs_.data() + s * n_actions_, n_actions_};
  }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> probs_;
};

struct RegularizationSpec {
  double tau = 0.0;
  TabularPolicy reference;

  /// tau = 0 with a uniform reference.
  static RegularizationSpec none(std::size_t n_states, std::size_t n_actions);
};

/// agg_p E_{s' ~ p(.|s,a)}[V(s')] with agg = min (robust), w-average
/// (soft-robust) or kernel 0 (non-robust).
double continuation(const ValueFunction& values, const UncertaintySet& set, Mode mode,
                    std::size_t s, std::size_t a);

/// KL(pi(.|s) || reference(.|s)) with 0 log 0 = 0.
double policy_kl(const TabularPolicy& pi, const TabularPolicy& reference, std::size_t s);

/// Fixed-policy operator T^pi V.
ValueFunction bellman_apply(const ValueFunction& values, const TabularMdp& mdp,
                            const UncertaintySet& set, const TabularPolicy& pi,
                            const RegularizationSpec& reg, Mode mode);

struct Backup {
  ValueFunction values;
  TabularPolicy greedy;
};

/// Optimal operator sup_pi T^pi V and an attaining policy. For tau > 0 the
/// maximizer is the Gibbs policy reference * exp(advantage / tau).
Backup optimal_bellman_apply(const ValueFunction& values, const TabularMdp& mdp,
                             const UncertaintySet& set, const RegularizationSpec& reg, Mode mode);

struct ValueIterationResult {
  ValueFunction values;
  TabularPolicy greedy;
  std::size_t iterations = 0;
  std::vector<double> residuals;
  bool converged = false;
};

inline constexpr double kDefaultTolerance = 1e-8;

ValueIterationResult value_iteration(const TabularMdp& mdp, const UncertaintySet& set,
                                     const RegularizationSpec& reg, Mode mode,
                                     double tol = kDefaultTolerance,
                                     std::size_t max_iters = 100000,
                                     const ValueFunction* initial = nullptr);

/// Fixed point of bellman_apply by iteration; same stopping rule as value_iteration.
ValueIterationResult policy_evaluate_exact(const TabularMdp& mdp, const UncertaintySet& set,
                                           const TabularPolicy& pi,
                                           const RegularizationSpec& reg, Mode mode,
                                           double tol = kDefaultTolerance,
                                           std::size_t max_iters = 100000);

/// 2 gamma eps / (1 - gamma)^2 + (2 gamma^(N+1) / (1 - gamma)) * init_gap.
double vi_error_bound(double epsilon_approx, double gamma, std::size_t sweeps, double init_gap);

double sup_norm_distance(const ValueFunction& u, const ValueFunction& v);

}  // namespace robust_ctrl::mdp
