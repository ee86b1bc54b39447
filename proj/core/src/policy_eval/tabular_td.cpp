#include "robust_ctrl/policy_eval/tabular_td.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::policy_eval {
namespace {

using mdp::Mode;

mdp::ValueFunction state_values(const std::vector<double>& q, std::size_t S, std::size_t A,
                                const mdp::TabularPolicy* pi, const mdp::RegularizationSpec& reg) {
  mdp::ValueFunction v(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    if (pi) {
      double total = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const double p = pi->prob(s, a);
        if (p == 0.0) continue;
        double penalty = 0.0;
        if (reg.tau > 0.0) penalty = reg.tau * std::log(p / reg.reference.prob(s, a));
        total += p * (q[s * A + a] - penalty);
      }
      v[s] = total;
    } else if (reg.tau == 0.0) {
      v[s] = *std::max_element(q.begin() + s * A, q.begin() + (s + 1) * A);
    } else {
      double shift = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < A; ++a) {
        if (reg.reference.prob(s, a) > 0.0) shift = std::max(shift, q[s * A + a] / reg.tau);
      }
      double total = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const double w = reg.reference.prob(s, a);
        if (w > 0.0) total += w * std::exp(q[s * A + a] / reg.tau - shift);
      }
      v[s] = reg.tau * (shift + std::log(total));
    }
  }
  return v;
}

std::size_t draw(std::span<const double> row, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng), acc = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    acc += row[i];
    if (x < acc) return i;
  }
  return row.size() - 1;
}

}  // namespace

TabularTdReport tabular_td_equivalence_harness(const mdp::TabularMdp& mdp, const mdp::UncertaintySet& set,
                                               const mdp::TabularPolicy* pi, const mdp::RegularizationSpec& reg,
                                               Mode mode, const TabularTdOptions& options) {
  const std::size_t S = mdp.n_states(), A = mdp.n_actions();
  if (set.kernel(0).n_states() != S || set.kernel(0).n_actions() != A) throw ShapeError("harness: kernel shape");
  if (pi && (pi->n_states() != S || pi->n_actions() != A)) throw ShapeError("harness: policy shape");
  if (!(options.step_exponent > 0.5 && options.step_exponent <= 1.0)) {
    throw ConfigError("harness: step_exponent must lie in (0.5, 1]");
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick_s(0, S - 1), pick_a(0, A - 1);
  std::discrete_distribution<std::size_t> pick_kernel(set.weights().begin(), set.weights().end());

  mdp::ValueFunction exact =
      pi ? mdp::policy_evaluate_exact(mdp, set, *pi, reg, mode, 1e-12).values
         : mdp::value_iteration(mdp, set, reg, mode, 1e-12).values;

  TabularTdReport report;
  report.q.assign(S * A, 0.0);
  std::vector<std::size_t> visits(S * A, 0);
  const double gamma = mdp.discount();

  for (std::size_t t = 1; t <= options.samples; ++t) {
    const std::size_t s = pick_s(rng), a = pick_a(rng);
    const mdp::ValueFunction v = state_values(report.q, S, A, pi, reg);
    double cont = 0.0;
    if (options.target == TabularTarget::kExpected) {
      cont = mdp::continuation(v, set, mode, s, a);
    } else {
      switch (mode) {
        case Mode::kNonRobust:
          cont = v[draw(set.kernel(0).row(s, a), rng)];
          break;
        case Mode::kSoftRobust:
          cont = v[draw(set.kernel(pick_kernel(rng)).row(s, a), rng)];
          break;
        case Mode::kRobust:
          cont = std::numeric_limits<double>::infinity();
          for (const auto& k : set.kernels()) cont = std::min(cont, v[draw(k.row(s, a), rng)]);
          break;
      }
    }
    const std::size_t i = s * A + a;
    const double step = std::pow(static_cast<double>(++visits[i]), -options.step_exponent);
    report.q[i] += step * (mdp.reward(s, a) + gamma * cont - report.q[i]);
    if (options.trace_every > 0 && t % options.trace_every == 0) {
      report.gap_trace.push_back(mdp::sup_norm_distance(state_values(report.q, S, A, pi, reg), exact));
    }
  }
  report.values = state_values(report.q, S, A, pi, reg);
  report.exact = std::move(exact);
  report.gap = mdp::sup_norm_distance(report.values, report.exact);
  return report;
}

}  // namespace robust_ctrl::policy_eval
