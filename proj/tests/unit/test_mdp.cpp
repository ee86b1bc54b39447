#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "robust_ctrl/errors.hpp"
#include "robust_ctrl/mdp/io.hpp"
#include "robust_ctrl/mdp/tabular.hpp"
#include "support/mdp_oracles.hpp"
#include "support/random_mdp.hpp"

using namespace robust_ctrl;
using namespace robust_ctrl::mdp;
using robust_ctrl::testing::random_instance;
using robust_ctrl::testing::random_policy;
using robust_ctrl::testing::random_values;

namespace {

RegularizationSpec reg_with(double tau, TabularPolicy ref) { return RegularizationSpec{tau, std::move(ref)}; }

RobustMdp fixed_instance() {
  auto inst = robust_ctrl::testing::a2_instance();
  return RobustMdp{inst.mdp, inst.set};
}

}  // namespace

TEST(BellmanApply, SingletonRobustEqualsNonRobustBitwise) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 4, 3, 1, 0.9);
    auto pi = random_policy(rng, 4, 3);
    auto v = random_values(rng, 4);
    auto reg = reg_with(0.3, random_policy(rng, 4, 3));
    auto robust = bellman_apply(v, inst.mdp, inst.set, pi, reg, Mode::kRobust);
    auto nominal = bellman_apply(v, inst.mdp, inst.set, pi, reg, Mode::kNonRobust);
    auto soft = bellman_apply(v, inst.mdp, inst.set, pi, reg, Mode::kSoftRobust);
    for (std::size_t s = 0; s < 4; ++s) {
      EXPECT_EQ(robust[s], nominal[s]);
      EXPECT_EQ(soft[s], nominal[s]);
    }
  }
}

TEST(BellmanApply, MatchesBruteForceOverKernelSelections) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    auto inst = random_instance(rng, 2, 2, 3, 0.9);
    auto pi = random_policy(rng, 2, 2);
    auto v = random_values(rng, 2);
    auto got = bellman_apply(v, inst.mdp, inst.set, pi, RegularizationSpec::none(2, 2), Mode::kRobust);
    auto want = robust_ctrl::testing::brute_force_robust_backup(inst.mdp, inst.set, pi, v);
    for (std::size_t s = 0; s < 2; ++s) EXPECT_NEAR(got[s], want[s], 1e-12);
  }
}

TEST(BellmanApply, ZeroValuesGiveExpectedReward) {
  std::mt19937_64 rng(3);
  auto inst = random_instance(rng, 5, 3, 2, 0.95);
  auto pi = random_policy(rng, 5, 3);
  ValueFunction zero(5, 0.0);
  for (Mode mode : {Mode::kNonRobust, Mode::kRobust, Mode::kSoftRobust}) {
    auto out = bellman_apply(zero, inst.mdp, inst.set, pi, RegularizationSpec::none(5, 3), mode);
    for (std::size_t s = 0; s < 5; ++s) {
      double expected = 0.0;
      for (std::size_t a = 0; a < 3; ++a) expected += pi.prob(s, a) * inst.mdp.reward(s, a);
      EXPECT_EQ(out[s], expected);
    }
  }
}

TEST(BellmanApply, ShapeAndDivergenceErrors) {
  std::mt19937_64 rng(4);
  auto inst = random_instance(rng, 3, 2, 2, 0.9);
  auto pi = TabularPolicy::uniform(3, 2);
  EXPECT_THROW(bellman_apply(ValueFunction(2, 0.0), inst.mdp, inst.set, pi,
                             RegularizationSpec::none(3, 2), Mode::kRobust),
               ShapeError);
  EXPECT_THROW(bellman_apply(ValueFunction(3, 0.0), inst.mdp, inst.set, TabularPolicy::uniform(3, 3),
                             RegularizationSpec::none(3, 2), Mode::kRobust),
               ShapeError);
  std::vector<std::size_t> zeros{0, 0, 0};
  auto ref = TabularPolicy::deterministic(2, zeros);
  EXPECT_THROW(bellman_apply(ValueFunction(3, 0.0), inst.mdp, inst.set, pi, reg_with(0.1, ref),
                             Mode::kRobust),
               DivergenceError);
  // With tau = 0 the reference is never consulted.
  EXPECT_NO_THROW(bellman_apply(ValueFunction(3, 0.0), inst.mdp, inst.set, pi, reg_with(0.0, ref),
                                Mode::kRobust));
}

TEST(OptimalBellman, SingletonUnregularizedIsClassicalBackup) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 4, 3, 1, 0.9);
    auto v = random_values(rng, 4);
    auto out = optimal_bellman_apply(v, inst.mdp, inst.set, RegularizationSpec::none(4, 3), Mode::kRobust);
    for (std::size_t s = 0; s < 4; ++s) {
      double best = -1e300;
      for (std::size_t a = 0; a < 3; ++a) {
        best = std::max(best, inst.mdp.reward(s, a) + 0.9 * robust_ctrl::testing::row_dot(inst.set.kernel(0), s, a, v));
      }
      EXPECT_NEAR(out.values[s], best, 1e-12);
    }
  }
}

TEST(OptimalBellman, GibbsClosedFormMatchesSimplexSearch) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = random_instance(rng, 3, 3, 3, 0.9);
    auto v = random_values(rng, 3);
    auto ref = random_policy(rng, 3, 3);
    auto out = optimal_bellman_apply(v, inst.mdp, inst.set, reg_with(0.5, ref), Mode::kRobust);
    for (std::size_t s = 0; s < 3; ++s) {
      std::vector<double> adv(3), r(3);
      for (std::size_t a = 0; a < 3; ++a) {
        double worst = 1e300;
        for (const auto& k : inst.set.kernels()) worst = std::min(worst, robust_ctrl::testing::row_dot(k, s, a, v));
        adv[a] = inst.mdp.reward(s, a) + 0.9 * worst;
        r[a] = ref.prob(s, a);
      }
      EXPECT_NEAR(out.values[s], robust_ctrl::testing::simplex_search_max(adv, r, 0.5), 1e-6);
    }
    // The returned greedy policy attains the backup.
    auto attained = bellman_apply(v, inst.mdp, inst.set, out.greedy, reg_with(0.5, ref), Mode::kRobust);
    for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(attained[s], out.values[s], 1e-10);
  }
}

TEST(OptimalBellman, LargeTemperatureGivesUniformPolicy) {
  std::mt19937_64 rng(7);
  auto inst = random_instance(rng, 4, 3, 2, 0.9);
  auto v = random_values(rng, 4);
  auto out = optimal_bellman_apply(v, inst.mdp, inst.set, reg_with(1e6, TabularPolicy::uniform(4, 3)),
                                   Mode::kRobust);
  for (double p : out.greedy.probs()) EXPECT_LT(std::abs(p - 1.0 / 3.0), 1e-3);
}

TEST(OptimalBellman, TiesBreakTowardLowestIndex) {
  TabularMdp m(1, 3, {1.0, 1.0, 1.0}, 0.5);
  UncertaintySet set({Kernel(1, 3, {1.0, 1.0, 1.0})});
  auto out = optimal_bellman_apply({0.0}, m, set, RegularizationSpec::none(1, 3), Mode::kRobust);
  EXPECT_EQ(out.greedy.prob(0, 0), 1.0);
}

TEST(ValueIteration, ResidualsDecayGeometrically) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 5, 3, 3, 0.9);
    for (Mode mode : {Mode::kNonRobust, Mode::kRobust, Mode::kSoftRobust}) {
      for (double tau : {0.0, 0.2}) {
        auto res = value_iteration(inst.mdp, inst.set, reg_with(tau, random_policy(rng, 5, 3)), mode, 1e-10);
        ASSERT_TRUE(res.converged);
        for (std::size_t k = 0; k + 1 < res.residuals.size(); ++k) {
          EXPECT_LE(res.residuals[k + 1], 0.9 * res.residuals[k] + 1e-12);
        }
      }
    }
  }
}

TEST(ValueIteration, MatchesExhaustiveAdversarialDp) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = random_instance(rng, 2, 2, 2, 0.9);
    auto res = value_iteration(inst.mdp, inst.set, RegularizationSpec::none(2, 2), Mode::kRobust, 1e-12);
    auto oracle = robust_ctrl::testing::exhaustive_adversarial_dp(inst.mdp, inst.set);
    for (std::size_t s = 0; s < 2; ++s) EXPECT_NEAR(res.values[s], oracle[s], 1e-8);
  }
}

TEST(ValueIteration, DegenerateWeightsEqualNominal) {
  std::mt19937_64 rng(10);
  auto inst = random_instance(rng, 4, 2, 3, 0.9);
  UncertaintySet degenerate(inst.set.kernels(), {1.0, 0.0, 0.0});
  auto reg = reg_with(0.1, TabularPolicy::uniform(4, 2));
  auto soft = value_iteration(inst.mdp, degenerate, reg, Mode::kSoftRobust, 1e-12);
  auto nominal = value_iteration(inst.mdp, degenerate, reg, Mode::kNonRobust, 1e-12);
  for (std::size_t s = 0; s < 4; ++s) EXPECT_NEAR(soft.values[s], nominal.values[s], 1e-12);
}

TEST(ValueIteration, NonConvergenceIsReportedNotThrown) {
  std::mt19937_64 rng(11);
  auto inst = random_instance(rng, 3, 2, 2, 0.99);
  auto res = value_iteration(inst.mdp, inst.set, RegularizationSpec::none(3, 2), Mode::kRobust, 1e-12, 5);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.iterations, 5u);
  EXPECT_THROW(value_iteration(inst.mdp, inst.set, RegularizationSpec::none(3, 2), Mode::kRobust, 0.0),
               DomainError);
}

TEST(ValueIteration, FixedPointIndependentOfInitialization) {
  std::mt19937_64 rng(12);
  const double tol = 1e-9;
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 4, 3, 3, 0.9);
    auto reg = reg_with(0.1, random_policy(rng, 4, 3));
    auto v0 = random_values(rng, 4);
    auto v1 = random_values(rng, 4);
    auto a = value_iteration(inst.mdp, inst.set, reg, Mode::kRobust, tol, 100000, &v0);
    auto b = value_iteration(inst.mdp, inst.set, reg, Mode::kRobust, tol, 100000, &v1);
    EXPECT_LE(sup_norm_distance(a.values, b.values), 2 * tol / (1 - 0.9));
  }
}

TEST(PolicyEvaluation, SymmetricInstanceGivesConstantValue) {
  // Two states; kernel 1 is kernel 0 with the states swapped; rewards depend only on the action.
  TabularMdp m(2, 2, {1.0, 0.5, 1.0, 0.5}, 0.9);
  Kernel k0(2, 2, {0.7, 0.3, 0.2, 0.8, 0.3, 0.7, 0.8, 0.2});
  Kernel k1(2, 2, {0.3, 0.7, 0.8, 0.2, 0.7, 0.3, 0.2, 0.8});
  UncertaintySet set({k0, k1});
  for (Mode mode : {Mode::kNonRobust, Mode::kRobust, Mode::kSoftRobust}) {
    auto res = policy_evaluate_exact(m, set, TabularPolicy::uniform(2, 2), RegularizationSpec::none(2, 2), mode, 1e-12);
    EXPECT_NEAR(res.values[0], res.values[1], 1e-10);
  }
}

TEST(PolicyEvaluation, SingletonMatchesLinearSolve) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 5, 3, 1, 0.95);
    auto pi = random_policy(rng, 5, 3);
    auto res = policy_evaluate_exact(inst.mdp, inst.set, pi, RegularizationSpec::none(5, 3), Mode::kRobust, 1e-12);
    std::vector<std::size_t> sel(15, 0);
    auto exact = robust_ctrl::testing::linear_solve_value(inst.mdp, inst.set, sel, pi);
    for (std::size_t s = 0; s < 5; ++s) EXPECT_NEAR(res.values[s], exact(s), 1e-8);
  }
}

TEST(PolicyEvaluation, RobustBelowSoftRobustBelowOptimistic) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_instance(rng, 4, 3, 3, 0.9);
    auto pi = random_policy(rng, 4, 3);
    auto reg = RegularizationSpec::none(4, 3);
    auto robust = policy_evaluate_exact(inst.mdp, inst.set, pi, reg, Mode::kRobust, 1e-11).values;
    auto soft = policy_evaluate_exact(inst.mdp, inst.set, pi, reg, Mode::kSoftRobust, 1e-11).values;
    // Optimistic value: fixed point with max over kernels, computed here directly.
    ValueFunction opt(4, 0.0);
    for (int it = 0; it < 2000; ++it) {
      ValueFunction next(4, 0.0);
      for (std::size_t s = 0; s < 4; ++s) {
        for (std::size_t a = 0; a < 3; ++a) {
          double best = -1e300;
          for (const auto& k : inst.set.kernels()) best = std::max(best, robust_ctrl::testing::row_dot(k, s, a, opt));
          next[s] += pi.prob(s, a) * (inst.mdp.reward(s, a) + 0.9 * best);
        }
      }
      opt = next;
    }
    for (std::size_t s = 0; s < 4; ++s) {
      EXPECT_LE(robust[s], soft[s] + 1e-9);
      EXPECT_LE(soft[s], opt[s] + 1e-9);
    }
  }
}

TEST(PolicyEvaluation, RobustMatchesEnumeratedAdversary) {
  auto model = fixed_instance();
  std::mt19937_64 rng(15);
  auto pi = random_policy(rng, 3, 2);
  auto res = policy_evaluate_exact(model.mdp, model.set, pi, RegularizationSpec::none(3, 2), Mode::kRobust, 1e-13);
  auto oracle = robust_ctrl::testing::enumerated_robust_policy_value(model.mdp, model.set, pi);
  for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(res.values[s], oracle[s], 1e-9);
}

TEST(ErrorBound, ExactViSecondTermVanishes) {
  EXPECT_LE(vi_error_bound(0.0, 0.9, 1000, 1.0), 1e-40);
}

TEST(ErrorBound, MatchesDirectArithmetic) {
  double pow = 1.0;
  for (int i = 0; i < 11; ++i) pow *= 0.9;
  const double expected = 2 * 0.9 * 0.01 / (0.1 * 0.1) + 2 * pow / 0.1 * 5;
  EXPECT_NEAR(vi_error_bound(0.01, 0.9, 10, 5.0), expected, 1e-12);
  EXPECT_NEAR(expected, 1.8 + 100 * pow, 1e-12);
}

TEST(ErrorBound, MonotoneAndDomainChecked) {
  EXPECT_LT(vi_error_bound(0.01, 0.9, 10, 1.0), vi_error_bound(0.02, 0.9, 10, 1.0));
  EXPECT_LT(vi_error_bound(0.01, 0.9, 10, 1.0), vi_error_bound(0.01, 0.9, 10, 2.0));
  EXPECT_THROW(vi_error_bound(0.0, 1.0, 10, 1.0), DomainError);
  EXPECT_THROW(vi_error_bound(0.0, 0.0, 10, 1.0), DomainError);
}

TEST(Contraction, AllOperatorsOnRandomInstances) {
  std::mt19937_64 rng(16);
  std::uniform_int_distribution<int> ns(1, 6), na(1, 4), nk(1, 4);
  const double gammas[] = {0.5, 0.9, 0.99};
  const double taus[] = {0.0, 0.1, 1.0};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t S = ns(rng), A = na(rng), K = nk(rng);
    const double gamma = gammas[trial % 3];
    const double tau = taus[(trial / 3) % 3];
    auto inst = random_instance(rng, S, A, K, gamma);
    auto reg = reg_with(tau, random_policy(rng, S, A));
    auto pi = random_policy(rng, S, A);
    auto u = random_values(rng, S);
    auto v = random_values(rng, S);
    const double gap = sup_norm_distance(u, v);
    for (Mode mode : {Mode::kNonRobust, Mode::kRobust, Mode::kSoftRobust}) {
      auto tu = bellman_apply(u, inst.mdp, inst.set, pi, reg, mode);
      auto tv = bellman_apply(v, inst.mdp, inst.set, pi, reg, mode);
      EXPECT_LE(sup_norm_distance(tu, tv), gamma * gap + 1e-10);
      auto ou = optimal_bellman_apply(u, inst.mdp, inst.set, reg, mode).values;
      auto ov = optimal_bellman_apply(v, inst.mdp, inst.set, reg, mode).values;
      EXPECT_LE(sup_norm_distance(ou, ov), gamma * gap + 1e-10);
    }
  }
}

TEST(Corollary1, GreedyPolicyBoundHolds) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    auto inst = random_instance(rng, 4, 3, 3, 0.9);
    auto reg = reg_with(trial % 2 ? 0.3 : 0.0, random_policy(rng, 4, 3));
    auto star = value_iteration(inst.mdp, inst.set, reg, Mode::kRobust, 1e-13).values;
    auto v0 = random_values(rng, 4);
    ValueFunction v = v0;
    for (std::size_t n = 1; n <= 8; ++n) {
      auto backup = optimal_bellman_apply(v, inst.mdp, inst.set, reg, Mode::kRobust);
      v = backup.values;
      // Greedy with respect to V_n is the policy attaining T V_n.
      auto greedy = optimal_bellman_apply(v, inst.mdp, inst.set, reg, Mode::kRobust).greedy;
      auto v_pi = policy_evaluate_exact(inst.mdp, inst.set, greedy, reg, Mode::kRobust, 1e-13).values;
      const double bound = vi_error_bound(0.0, 0.9, n, sup_norm_distance(star, v0));
      EXPECT_LE(sup_norm_distance(star, v_pi), bound + 1e-9) << "n=" << n;
    }
  }
}

TEST(MdpJson, RoundTripAndErrors) {
  auto model = fixed_instance();
  auto text = to_mdp_json(model);
  auto back = parse_mdp_json(text);
  EXPECT_EQ(back.mdp.rewards(), model.mdp.rewards());
  ASSERT_EQ(back.set.size(), model.set.size());
  for (std::size_t k = 0; k < model.set.size(); ++k) {
    EXPECT_EQ(back.set.kernel(k).probs(), model.set.kernel(k).probs());
  }
  EXPECT_THROW(parse_mdp_json("{"), ConfigError);
  EXPECT_THROW(parse_mdp_json(R"({"n_states":1,"n_actions":1,"discount":0.5,"reward":[[1]],"kernels":[[[0.5]]]})"),
               DomainError);
  EXPECT_THROW(parse_mdp_json(R"({"n_states":1,"n_actions":1,"discount":0.5,"reward":[[1, 2]],"kernels":[[[1]]]})"),
               ShapeError);
  EXPECT_THROW(parse_mdp_json(R"({"n_states":1,"n_actions":1,"discount":1.5,"reward":[[1]],"kernels":[[[1]]]})"),
               DomainError);
}
