#pragma once

// Lookup-table TD learning on a tabular robust MDP, used to check that the
// sampled TD process settles on the same fixed point as the exact operator.

#include <cstdint>
#include <vector>

#include "robust_ctrl/mdp/tabular.hpp"

namespace robust_ctrl::policy_eval {

enum class TabularTarget {
  /// Exact next-state expectation under each kernel. Unbiased for every mode.
  kExpected,
  /// One sampled next state per kernel. Unbiased for the non-robust and
  /// soft-robust modes only; the min over sampled values is biased low.
  kSampled,
};

struct TabularTdOptions {
  std::size_t samples = 200000;
  /// Step size n(s,a)^(-step_exponent) at the n-th visit of (s,a).
  double step_exponent = 0.6;
  TabularTarget target = TabularTarget::kExpected;
  std::uint64_t seed = 0;
  /// Record the gap every this many samples (0 disables the trace).
  std::size_t trace_every = 10000;
};

struct TabularTdReport {
  std::vector<double> q;  // q[s * A + a]
  mdp::ValueFunction values;
  mdp::ValueFunction exact;
  double gap = 0.0;
  std::vector<double> gap_trace;
};

/// Evaluates `pi` when given, otherwise learns the optimal (robust) values.
TabularTdReport tabular_td_equivalence_harness(const mdp::TabularMdp& mdp, const mdp::UncertaintySet& set,
                                               const mdp::TabularPolicy* pi, const mdp::RegularizationSpec& reg,
                                               mdp::Mode mode, const TabularTdOptions& options = {});

}  // namespace robust_ctrl::policy_eval
