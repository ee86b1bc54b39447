#include "robust_ctrl/mdp/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::mdp {
namespace {

constexpr double kSimplexTolerance = 1e-12;

void check_simplex(std::span<const double> p, const char* what) {
  double total = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) {
      throw DomainError(std::string(what) + ": negative or non-finite probability");
    }
    total += x;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    std::ostringstream msg;
    msg << what << ": probabilities sum to " << total;
    throw DomainError(msg.str());
  }
}

void check_shapes(const ValueFunction& values, const TabularMdp& mdp, const UncertaintySet& set) {
  if (values.size() != mdp.n_states()) {
    throw ShapeError("value function length does not match n_states");
  }
  const Kernel& k = set.kernel(0);
  if (k.n_states() != mdp.n_states() || k.n_actions() != mdp.n_actions()) {
    throw ShapeError("uncertainty set shape does not match the MDP");
  }
}

void check_policy_shape(const TabularPolicy& pi, const TabularMdp& mdp, const char* what) {
  if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions()) {
    throw ShapeError(std::string(what) + " shape does not match the MDP");
  }
}

double expectation(std::span<const double> p, const ValueFunction& values) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i] * values[i];
  }
  return acc;
}

}  // namespace

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kNonRobust:
      return "non_robust";
    case Mode::kRobust:
      return "robust";
    case Mode::kSoftRobust:
      return "soft_robust";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& name) {
  if (name == "non_robust") return Mode::kNonRobust;
  if (name == "robust") return Mode::kRobust;
  if (name == "soft_robust") return Mode::kSoftRobust;
  throw ConfigError("unknown robustness mode '" + name + "'");
}

TabularMdp::TabularMdp(std::size_t n_states, std::size_t n_actions, std::vector<double> reward,
                       double discount)
    : n_states_(n_states), n_actions_(n_actions), reward_(std::move(reward)), discount_(discount) {
  if (n_states_ == 0 || n_actions_ == 0) throw ShapeError("MDP needs at least one state and action");
  if (reward_.size() != n_states_ * n_actions_) throw ShapeError("reward table has wrong size");
  if (!(discount_ > 0.0 && discount_ < 1.0)) throw DomainError("discount must lie in (0, 1)");
  for (double r : reward_) {
    if (!std::isfinite(r)) throw DomainError("rewards must be finite");
  }
}

double TabularMdp::max_abs_reward() const {
  double m = 0.0;
  for (double r : reward_) m = std::max(m, std::abs(r));
  return m;
}

Kernel::Kernel(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
  if (probs_.size() != n_states_ * n_actions_ * n_states_) {
    throw ShapeError("kernel table has wrong size");
  }
  for (std::size_t s = 0; s < n_states_; ++s) {
    for (std::size_t a = 0; a < n_actions_; ++a) check_simplex(row(s, a), "kernel row");
  }
}

UncertaintySet::UncertaintySet(std::vector<Kernel> kernels)
    : UncertaintySet(kernels, std::vector<double>(kernels.size(),
                                                  kernels.empty() ? 0.0 : 1.0 / kernels.size())) {}

UncertaintySet::UncertaintySet(std::vector<Kernel> kernels, std::vector<double> weights)
    : kernels_(std::move(kernels)), weights_(std::move(weights)) {
  if (kernels_.empty()) throw ShapeError("uncertainty set must not be empty");
  if (weights_.size() != kernels_.size()) throw ShapeError("one weight per kernel is required");
  for (const Kernel& k : kernels_) {
    if (k.n_states() != kernels_[0].n_states() || k.n_actions() != kernels_[0].n_actions()) {
      throw ShapeError("kernels in an uncertainty set must share their shape");
    }
  }
  // Weights are user-typed decimals, so allow a looser sum than kernel rows.
  double total = 0.0;
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0) throw DomainError("weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("weights must sum to one");
}

Kernel UncertaintySet::average_kernel() const {
  std::vector<double> probs(kernels_[0].probs().size(), 0.0);
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    const auto& p = kernels_[i].probs();
    for (std::size_t j = 0; j < probs.size(); ++j) probs[j] += weights_[i] * p[j];
  }
  // Renormalize rows so rounding in the weights cannot break the simplex check.
  const std::size_t n = kernels_[0].n_states();
  for (std::size_t r = 0; r < probs.size() / n; ++r) {
    double total = std::accumulate(probs.begin() + r * n, probs.begin() + (r + 1) * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) probs[r * n + j] /= total;
  }
  return Kernel(n, kernels_[0].n_actions(), std::move(probs));
}

TabularPolicy::TabularPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
  if (probs_.size() != n_states_ * n_actions_) throw ShapeError("policy table has wrong size");
  for (std::size_t s = 0; s < n_states_; ++s) check_simplex(row(s), "policy row");
}

TabularPolicy TabularPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
  return TabularPolicy(n_states, n_actions,
                       std::vector<double>(n_states * n_actions, 1.0 / n_actions));
}

TabularPolicy TabularPolicy::deterministic(std::size_t n_actions,
                                           std::span<const std::size_t> actions) {
  std::vector<double> probs(actions.size() * n_actions, 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= n_actions) throw ShapeError("action index out of range");
    probs[s * n_actions + actions[s]] = 1.0;
  }
  return TabularPolicy(actions.size(), n_actions, std::move(probs));
}

RegularizationSpec RegularizationSpec::none(std::size_t n_states, std::size_t n_actions) {
  return RegularizationSpec{0.0, TabularPolicy::uniform(n_states, n_actions)};
}

double continuation(const ValueFunction& values, const UncertaintySet& set, Mode mode,
                    std::size_t s, std::size_t a) {
  switch (mode) {
    case Mode::kNonRobust:
      return expectation(set.kernel(0).row(s, a), values);
    case Mode::kRobust: {
      double worst = std::numeric_limits<double>::infinity();
      for (const Kernel& k : set.kernels()) worst = std::min(worst, expectation(k.row(s, a), values));
      return worst;
    }
    case Mode::kSoftRobust: {
      double acc = 0.0;
      for (std::size_t i = 0; i < set.size(); ++i) {
        acc += set.weights()[i] * expectation(set.kernel(i).row(s, a), values);
      }
      return acc;
    }
  }
  return 0.0;
}

double policy_kl(const TabularPolicy& pi, const TabularPolicy& reference, std::size_t s) {
  double kl = 0.0;
  for (std::size_t a = 0; a < pi.n_actions(); ++a) {
    const double p = pi.prob(s, a);
    if (p == 0.0) continue;
    const double q = reference.prob(s, a);
    if (q == 0.0) {
      throw DivergenceError("policy puts mass on an action the reference policy excludes");
    }
    kl += p * std::log(p / q);
  }
  return kl;
}

ValueFunction bellman_apply(const ValueFunction& values, const TabularMdp& mdp,
                            const UncertaintySet& set, const TabularPolicy& pi,
                            const RegularizationSpec& reg, Mode mode) {
  check_shapes(values, mdp, set);
  check_policy_shape(pi, mdp, "policy");
  check_policy_shape(reg.reference, mdp, "reference policy");
  if (!std::isfinite(reg.tau) || reg.tau < 0.0) throw DomainError("tau must be finite and >= 0");

  const double gamma = mdp.discount();
  ValueFunction out(mdp.n_states(), 0.0);
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    double acc = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double p = pi.prob(s, a);
      if (p == 0.0) continue;
      double term = mdp.reward(s, a) + gamma * continuation(values, set, mode, s, a);
      if (reg.tau > 0.0) {
        const double q = reg.reference.prob(s, a);
        if (q == 0.0) {
          throw DivergenceError("policy puts mass on an action the reference policy excludes");
        }
        term -= reg.tau * std::log(p / q);
      }
      acc += p * term;
    }
    out[s] = acc;
  }
  return out;
}

Backup optimal_bellman_apply(const ValueFunction& values, const TabularMdp& mdp,
                             const UncertaintySet& set, const RegularizationSpec& reg, Mode mode) {
  check_shapes(values, mdp, set);
  check_policy_shape(reg.reference, mdp, "reference policy");
  if (!std::isfinite(reg.tau) || reg.tau < 0.0) throw DomainError("tau must be finite and >= 0");

  const std::size_t n_s = mdp.n_states();
  const std::size_t n_a = mdp.n_actions();
  const double gamma = mdp.discount();
  ValueFunction out(n_s, 0.0);
  std::vector<double> probs(n_s * n_a, 0.0);
  std::vector<double> adv(n_a, 0.0);

  for (std::size_t s = 0; s < n_s; ++s) {
    for (std::size_t a = 0; a < n_a; ++a) {
      adv[a] = mdp.reward(s, a) + gamma * continuation(values, set, mode, s, a);
    }
    if (reg.tau == 0.0) {
      // Strict > keeps the lowest index on ties.
      std::size_t best = 0;
      for (std::size_t a = 1; a < n_a; ++a) {
        if (adv[a] > adv[best]) best = a;
      }
      out[s] = adv[best];
      probs[s * n_a + best] = 1.0;
      continue;
    }
    // Log-sum-exp over the reference support, shifted by the max.
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n_a; ++a) {
      if (reg.reference.prob(s, a) > 0.0) shift = std::max(shift, adv[a] / reg.tau);
    }
    double z = 0.0;
    for (std::size_t a = 0; a < n_a; ++a) {
      const double q = reg.reference.prob(s, a);
      if (q == 0.0) continue;
      const double w = q * std::exp(adv[a] / reg.tau - shift);
      probs[s * n_a + a] = w;
      z += w;
    }
    for (std::size_t a = 0; a < n_a; ++a) probs[s * n_a + a] /= z;
    out[s] = reg.tau * (shift + std::log(z));
  }
  // Renormalization leaves rows within a few ulps of one; rebuild without the
  // strict simplex check failing on degenerate underflow.
  for (std::size_t s = 0; s < n_s; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < n_a; ++a) total += probs[s * n_a + a];
    for (std::size_t a = 0; a < n_a; ++a) probs[s * n_a + a] /= total;
  }
  return Backup{std::move(out), TabularPolicy(n_s, n_a, std::move(probs))};
}

double sup_norm_distance(const ValueFunction& u, const ValueFunction& v) {
  if (u.size() != v.size()) throw ShapeError("value functions differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) d = std::max(d, std::abs(u[i] - v[i]));
  return d;
}

ValueIterationResult value_iteration(const TabularMdp& mdp, const UncertaintySet& set,
                                     const RegularizationSpec& reg, Mode mode, double tol,
                                     std::size_t max_iters, const ValueFunction* initial) {
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
  ValueFunction v = initial ? *initial : ValueFunction(mdp.n_states(), 0.0);
  Backup backup = optimal_bellman_apply(v, mdp, set, reg, mode);
  ValueIterationResult result{v, backup.greedy, 0, {}, false};
  while (result.iterations < max_iters) {
    backup = optimal_bellman_apply(v, mdp, set, reg, mode);
    const double residual = sup_norm_distance(backup.values, v);
    v = std::move(backup.values);
    result.greedy = std::move(backup.greedy);
    result.residuals.push_back(residual);
    ++result.iterations;
    if (residual <= tol) {
      result.converged = true;
      break;
    }
  }
  result.values = std::move(v);
  return result;
}

ValueIterationResult policy_evaluate_exact(const TabularMdp& mdp, const UncertaintySet& set,
                                           const TabularPolicy& pi, const RegularizationSpec& reg,
                                           Mode mode, double tol, std::size_t max_iters) {
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
  ValueFunction v(mdp.n_states(), 0.0);
  ValueIterationResult result{v, pi, 0, {}, false};
  while (result.iterations < max_iters) {
    ValueFunction next = bellman_apply(v, mdp, set, pi, reg, mode);
    const double residual = sup_norm_distance(next, v);
    v = std::move(next);
    result.residuals.push_back(residual);
    ++result.iterations;
    if (residual <= tol) {
      result.converged = true;
      break;
    }
  }
  result.values = std::move(v);
  return result;
}

double vi_error_bound(double epsilon_approx, double gamma, std::size_t sweeps, double init_gap) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
  if (epsilon_approx < 0.0 || init_gap < 0.0) throw DomainError("epsilon and gap must be >= 0");
  const double one_minus = 1.0 - gamma;
  const double approx_term = 2.0 * gamma * epsilon_approx / (one_minus * one_minus);
  const double decay = std::pow(gamma, static_cast<double>(sweeps) + 1.0);
  return approx_term + 2.0 * decay / one_minus * init_gap;
}

}  // namespace robust_ctrl::mdp
