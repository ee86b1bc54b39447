#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "robust_ctrl/errors.hpp"
#include "robust_ctrl/mpo/mpo.hpp"

using namespace robust_ctrl;
using namespace robust_ctrl::mpo;

namespace {

nn::Matrix random_q(std::mt19937_64& rng, Eigen::Index k, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  nn::Matrix q(k, n);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) q(j, i) = normal(rng);
  }
  return q;
}

// Independent dual: eta * eps + eta * mean_j log mean_i exp(Q_ij / eta).
double oracle_dual(const nn::Matrix& q, double eps, double eta) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < q.rows(); ++j) {
    const double m = q.row(j).maxCoeff();
    double s = 0.0;
    for (Eigen::Index i = 0; i < q.cols(); ++i) s += std::exp((q(j, i) - m) / eta);
    acc += m / eta + std::log(s / static_cast<double>(q.cols()));
  }
  return eta * eps + eta * acc / static_cast<double>(q.rows());
}

double golden_section_eta(const nn::Matrix& q, double eps) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(kEtaMin), b = std::log(kEtaMax);
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = oracle_dual(q, eps, std::exp(c)), fd = oracle_dual(q, eps, std::exp(d));
  while (b - a > 1e-12) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = oracle_dual(q, eps, std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = oracle_dual(q, eps, std::exp(d));
    }
  }
  return std::exp(0.5 * (a + b));
}

struct MStepFixture {
  nn::GaussianPolicy policy, pi_k;
  nn::Matrix states, actions, weights;
  Eigen::Index K = 16, N = 5;

  explicit MStepFixture(std::uint64_t seed = 3) {
    std::mt19937_64 rng(seed);
    pi_k = nn::GaussianPolicy(nn::PolicySpec{3, 1, {16, 16}, false, 1e-4, 0.3});
    pi_k.init(rng);
    policy = pi_k;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    states.resize(K, 3);
    for (Eigen::Index j = 0; j < K; ++j) {
      for (Eigen::Index c = 0; c < 3; ++c) states(j, c) = u(rng);
    }
    actions.resize(K * N, 1);
    for (Eigen::Index r = 0; r < K * N; ++r) actions(r, 0) = 0.8 * u(rng);
    weights = nn::Matrix::Zero(K, N);
  }

  void one_hot_on_first() {
    weights.setZero();
    weights.col(0).setOnes();
  }

  double target_distance() const {
    const auto d = policy.distribution(states);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < K; ++j) acc += std::abs(d.mean(j, 0) - actions(j * N, 0));
    return acc / static_cast<double>(K);
  }
};

std::vector<double> window_means(const std::vector<double>& xs, std::size_t window) {
  std::vector<double> out;
  for (std::size_t i = 0; i + window <= xs.size(); i += window) {
    out.push_back(std::accumulate(xs.begin() + static_cast<long>(i), xs.begin() + static_cast<long>(i + window), 0.0) /
                  static_cast<double>(window));
  }
  return out;
}

envs::EnvSet pendulum_set(std::vector<double> training) {
  return envs::make_env_set(envs::Domain::kPendulumSwingup, training, std::vector<double>{1.5});
}

LoopConfig short_loop(int episodes, std::uint64_t seed) {
  LoopConfig loop;
  loop.episodes = episodes;
  loop.seed = seed;
  loop.min_replay = 500;
  loop.batch_size = 32;
  loop.learner_steps_per_round = 2;
  loop.critic_hidden = {16, 16};
  return loop;
}

MpoConfig small_mpo() {
  MpoConfig cfg;
  cfg.policy.hidden = {16, 16};
  return cfg;
}

policy_eval::RobustnessSpec spec_for(const envs::EnvSet& set, mdp::Mode mode, policy_eval::Objective objective,
                                     double tau) {
  policy_eval::RobustnessSpec spec;
  spec.mode = mode;
  spec.objective = objective;
  spec.tau = tau;
  if (mode != mdp::Mode::kNonRobust) spec.models = training_models(set);
  return spec;
}

bool same_streams(const std::vector<EpisodeMetrics>& a, const std::vector<EpisodeMetrics>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_stream(b[i])) return false;
  }
  return true;
}

}  // namespace

TEST(EStep, ConstantQGivesUniformWeights) {
  const nn::Matrix q = nn::Matrix::Constant(4, 15, 2.5);
  for (double eta : {1e-3, 1.0, 50.0}) {
    const auto e = e_step_weights(q, 0.1, eta);
    for (Eigen::Index j = 0; j < q.rows(); ++j) {
      for (Eigen::Index i = 0; i < q.cols(); ++i) EXPECT_EQ(e.weights(j, i), 1.0 / 15.0);
    }
  }
}

TEST(EStep, HugeEpsilonIsGreedy) {
  std::mt19937_64 rng(1);
  const nn::Matrix q = random_q(rng, 4, 15);
  const auto e = e_step_weights(q, 1e6, 1.0);
  EXPECT_NEAR(e.eta, kEtaMin, 1e-12);
  for (Eigen::Index j = 0; j < q.rows(); ++j) {
    Eigen::Index best = 0;
    q.row(j).maxCoeff(&best);
    EXPECT_NEAR(e.weights(j, best), 1.0, 1e-9);
  }
}

TEST(EStep, EtaMatchesGoldenSectionOracleAndKlBound) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-1.0, 1.5)(rng));
    const nn::Matrix q = random_q(rng, 4, 15, scale);
    for (double eps : {0.01, 0.1, 0.5}) {
      const auto e = e_step_weights(q, eps, 1.0);
      const double oracle = golden_section_eta(q, eps);
      EXPECT_NEAR(e.eta, oracle, 1e-4 * oracle) << "trial " << trial << " eps " << eps;
      EXPECT_LE(e.kl, eps * 1.01);
      for (Eigen::Index j = 0; j < q.rows(); ++j) EXPECT_NEAR(e.weights.row(j).sum(), 1.0, 1e-12);
    }
  }
}

TEST(EStep, DualIsUnimodalOnLogGrid) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const nn::Matrix q = random_q(rng, 8, 15, 5.0);
    std::vector<double> g;
    for (int k = 0; k <= 200; ++k) {
      g.push_back(temperature_dual(q, 0.1, std::exp(std::log(kEtaMin) + k * (std::log(kEtaMax) - std::log(kEtaMin)) / 200.0)));
    }
    const auto min_it = std::min_element(g.begin(), g.end());
    for (auto it = g.begin(); it != min_it; ++it) EXPECT_GE(*it, *(it + 1) - 1e-12);
    for (auto it = min_it; it + 1 != g.end(); ++it) EXPECT_LE(*it, *(it + 1) + 1e-12);
  }
}

TEST(EStep, WeightsTiltTowardHigherQ) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const nn::Matrix q = random_q(rng, 16, 15, 3.0);
    const auto e = e_step_weights(q, 0.1, 1.0);
    for (Eigen::Index j = 0; j < q.rows(); ++j) {
      EXPECT_GE(e.weights.row(j).dot(q.row(j)), q.row(j).mean() - 1e-12);
    }
  }
}

TEST(EStep, NonFiniteQFallsBack) {
  nn::Matrix q = nn::Matrix::Zero(2, 3);
  q(1, 2) = std::numeric_limits<double>::quiet_NaN();
  const auto e = e_step_weights(q, 0.1, 0.7);
  EXPECT_TRUE(e.fallback);
  EXPECT_EQ(e.eta, 0.7);
  EXPECT_THROW(e_step_weights(q, -1.0), ConfigError);
}

TEST(MStep, OneHotWeightsPullMeansToTargets) {
  MStepFixture f;
  f.one_hot_on_first();
  MStepConfig cfg;
  cfg.epsilon_mu = 1e6;
  cfg.epsilon_sigma = 1e6;
  MStep m(cfg, nn::AdamConfig{1e-3});
  std::vector<double> dist;
  for (int it = 0; it < 1500; ++it) {
    m.step(f.policy, f.pi_k, f.states, f.actions, f.weights);
    dist.push_back(f.target_distance());
  }
  const auto w = window_means(dist, 100);
  for (std::size_t i = 1; i < w.size(); ++i) EXPECT_LE(w[i], w[i - 1] + 1e-9) << "window " << i;
  EXPECT_LT(w.back(), 0.1 * w.front());
}

TEST(MStep, UniformWeightsGiveAverageLikelihoodGradient) {
  MStepFixture f;
  f.weights.setConstant(1.0 / static_cast<double>(f.N));
  const nn::Vector g = MStep::likelihood_gradient(f.policy, f.pi_k, f.states, f.actions, f.weights);

  // Plain average log-likelihood at policy == pi_k, where the decoupled and
  // joint objectives share their gradient.
  nn::GaussianPolicy copy = f.policy;
  nn::Tape tape;
  auto bound = nn::bind(tape, copy.params());
  auto out = copy.forward(tape.constant(f.states), bound);
  nn::Var ll = nn::log_prob(nn::repeat_rows(out.mean, f.N), nn::repeat_rows(out.std, f.N), f.actions);
  nn::Var avg = nn::scale(nn::sum(ll), 1.0 / static_cast<double>(f.K * f.N));
  tape.backward(avg);
  const nn::Vector expected = nn::gather_grad(bound, copy.params());
  EXPECT_LT((g - expected).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + expected.cwiseAbs().maxCoeff()));
}

TEST(MStep, TinyTrustRegionBinds) {
  MStepFixture f;
  f.one_hot_on_first();
  MStepConfig cfg;
  cfg.epsilon_mu = 1e-9;
  cfg.epsilon_sigma = 1e-9;
  MStep m(cfg, nn::AdamConfig{3e-4});
  for (int it = 0; it < 300; ++it) m.step(f.policy, f.pi_k, f.states, f.actions, f.weights);
  const auto [kl_mu, kl_sigma] = MStep::decoupled_kl(f.policy, f.pi_k, f.states);
  EXPECT_LT(kl_mu, 1e-6);
  EXPECT_LT(kl_sigma, 1e-6);
  EXPECT_LE(m.alpha_mu(), cfg.max_alpha);
  EXPECT_LE(m.alpha_sigma(), cfg.max_alpha);
}

TEST(MStep, WeightedLikelihoodIsMonotone) {
  MStepFixture f(7);
  std::mt19937_64 rng(8);
  f.weights = e_step_weights(random_q(rng, f.K, f.N, 2.0), 0.1).weights;
  // Loose trust region: once a bound binds the multipliers trade likelihood for KL.
  MStepConfig cfg;
  cfg.epsilon_mu = 1.0;
  cfg.epsilon_sigma = 1.0;
  MStep m(cfg, nn::AdamConfig{3e-4});
  std::vector<double> ll;
  for (int it = 0; it < 600; ++it) ll.push_back(m.step(f.policy, f.pi_k, f.states, f.actions, f.weights).weighted_log_likelihood);
  const auto w = window_means(ll, 50);
  for (std::size_t i = 1; i < w.size(); ++i) EXPECT_GE(w[i], w[i - 1] - 1e-9) << "window " << i;
}

TEST(MStep, RejectsBadShapesAndConfig) {
  MStepFixture f;
  MStep m(MStepConfig{}, nn::AdamConfig{});
  EXPECT_THROW(m.step(f.policy, f.pi_k, f.states, f.actions, nn::Matrix::Zero(3, 5)), ShapeError);
  MStepConfig bad;
  bad.epsilon_sigma = 0.0;
  EXPECT_THROW(MStep(bad, nn::AdamConfig{}), ConfigError);
}

TEST(MpoTrain, SingletonSetCollapsesModes) {
  const auto set = pendulum_set({1.0});
  for (auto objective : {policy_eval::Objective::kExpected, policy_eval::Objective::kEntropyRegularized}) {
    const auto loop = short_loop(3, 11);
    const auto non = train(set, spec_for(set, mdp::Mode::kNonRobust, objective, 0.1), small_mpo(), loop);
    const auto rob = train(set, spec_for(set, mdp::Mode::kRobust, objective, 0.1), small_mpo(), loop);
    const auto soft = train(set, spec_for(set, mdp::Mode::kSoftRobust, objective, 0.1), small_mpo(), loop);
    ASSERT_FALSE(non.aborted) << non.abort_reason;
    EXPECT_TRUE(same_streams(non.metrics, rob.metrics));
    EXPECT_TRUE(same_streams(non.metrics, soft.metrics));
    EXPECT_EQ(non.policy.params().values(), rob.policy.params().values());
    EXPECT_EQ(non.policy.params().values(), soft.policy.params().values());
  }
}

TEST(MpoTrain, SeedDeterminism) {
  const auto set = pendulum_set({1.0, 1.1, 1.4});
  const auto spec = spec_for(set, mdp::Mode::kRobust, policy_eval::Objective::kEntropyRegularized, 0.1);
  const auto a = train(set, spec, small_mpo(), short_loop(3, 5));
  const auto b = train(set, spec, small_mpo(), short_loop(3, 5));
  const auto c = train(set, spec, small_mpo(), short_loop(3, 6));
  EXPECT_TRUE(same_streams(a.metrics, b.metrics));
  EXPECT_FALSE(same_streams(a.metrics, c.metrics));
}

TEST(LimitedDr, EnvironmentDrawsAreBalanced) {
  const auto set = pendulum_set({1.0, 1.1, 1.4});
  auto loop = short_loop(300, 17);
  loop.learner_steps_per_round = 0;
  const auto r = limited_dr_train(set, spec_for(set, mdp::Mode::kNonRobust, policy_eval::Objective::kExpected, 0.0),
                                  small_mpo(), loop);
  ASSERT_EQ(r.metrics.size(), 300u);
  std::vector<int> counts(3, 0);
  for (const auto& m : r.metrics) counts.at(static_cast<std::size_t>(m.env_index))++;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 100.0) * (c - 100.0) / 100.0;
  EXPECT_LT(chi2, 9.2103);  // chi-square(2) at p = 0.01
}

TEST(LimitedDr, SingletonMatchesPlainMpo) {
  const auto set = pendulum_set({1.0});
  const auto spec = spec_for(set, mdp::Mode::kNonRobust, policy_eval::Objective::kEntropyRegularized, 0.1);
  const auto loop = short_loop(3, 21);
  const auto plain = train(set, spec, small_mpo(), loop);
  auto dr = limited_dr_train(set, spec, small_mpo(), loop);
  ASSERT_EQ(plain.metrics.size(), dr.metrics.size());
  for (std::size_t i = 0; i < dr.metrics.size(); ++i) {
    EXPECT_EQ(dr.metrics[i].env_index, 0);
    dr.metrics[i].env_index = -1;
  }
  EXPECT_TRUE(same_streams(plain.metrics, dr.metrics));
}

TEST(MpoTrain, LearnsOnPendulum) {
  const auto set = pendulum_set({1.0});
  LoopConfig loop;
  loop.episodes = 120;
  loop.seed = 0;
  const auto r = train(set, spec_for(set, mdp::Mode::kNonRobust, policy_eval::Objective::kExpected, 0.0), MpoConfig{},
                       loop);
  ASSERT_FALSE(r.aborted) << r.abort_reason;
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 20; ++i) {
    first += r.metrics[static_cast<std::size_t>(i)].nominal_return;
    last += r.metrics[r.metrics.size() - 1 - static_cast<std::size_t>(i)].nominal_return;
  }
  EXPECT_GT(last, first);
}
