#pragma once

#include <random>
#include <vector>

#include "robust_ctrl/mdp/tabular.hpp"

namespace robust_ctrl::testing {

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n, bool allow_zero) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) {
    x = u(rng);
    if (allow_zero && u(rng) < 0.2) x = 0.0;
    total += x;
  }
  if (total == 0.0) {
    p[0] = 1.0;
    return p;
  }
  for (auto& x : p) x /= total;
  // Push the rounding residue into the largest entry so rows sum to one.
  double s = 0.0;
  std::size_t big = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s += p[i];
    if (p[i] > p[big]) big = i;
  }
  p[big] += 1.0 - s;
  return p;
}

inline mdp::Kernel random_kernel(std::mt19937_64& rng, std::size_t n_s, std::size_t n_a,
                                 bool sparse = true) {
  std::vector<double> probs;
  for (std::size_t r = 0; r < n_s * n_a; ++r) {
    auto row = random_simplex(rng, n_s, sparse);
    probs.insert(probs.end(), row.begin(), row.end());
  }
  return mdp::Kernel(n_s, n_a, std::move(probs));
}

inline mdp::TabularPolicy random_policy(std::mt19937_64& rng, std::size_t n_s, std::size_t n_a,
                                        bool allow_zero = false) {
  std::vector<double> probs;
  for (std::size_t s = 0; s < n_s; ++s) {
    auto row = random_simplex(rng, n_a, allow_zero);
    probs.insert(probs.end(), row.begin(), row.end());
  }
  return mdp::TabularPolicy(n_s, n_a, std::move(probs));
}

struct RandomInstance {
  mdp::TabularMdp mdp;
  mdp::UncertaintySet set;
};

inline RandomInstance random_instance(std::mt19937_64& rng, std::size_t n_s, std::size_t n_a,
                                      std::size_t n_kernels, double gamma) {
  std::uniform_real_distribution<double> r(-1.0, 1.0);
  std::vector<double> reward(n_s * n_a);
  for (auto& x : reward) x = r(rng);
  std::vector<mdp::Kernel> kernels;
  for (std::size_t k = 0; k < n_kernels; ++k) kernels.push_back(random_kernel(rng, n_s, n_a));
  auto weights = random_simplex(rng, n_kernels, false);
  return {mdp::TabularMdp(n_s, n_a, std::move(reward), gamma),
          mdp::UncertaintySet(std::move(kernels), std::move(weights))};
}

/// Fixed 3-state, 2-action, 3-kernel instance shared by the oracle and TD checks.
inline RandomInstance a2_instance() {
  std::mt19937_64 rng(20240611);
  return random_instance(rng, 3, 2, 3, 0.9);
}

inline mdp::ValueFunction random_values(std::mt19937_64& rng, std::size_t n, double lo = -10.0,
                                        double hi = 10.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  mdp::ValueFunction v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace robust_ctrl::testing
