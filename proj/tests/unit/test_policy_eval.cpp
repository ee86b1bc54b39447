#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "robust_ctrl/errors.hpp"
#include "robust_ctrl/policy_eval/tabular_td.hpp"
#include "robust_ctrl/policy_eval/td.hpp"
#include "support/random_mdp.hpp"
#include "support/rollouts.hpp"

using namespace robust_ctrl;
using namespace robust_ctrl::policy_eval;
namespace rt = robust_ctrl::testing;
using rt::ChainModel;

namespace {

struct PendulumFixture {
  envs::EnvSet set;
  nn::GaussianPolicy pi_k, pi_ref;
  nn::QNetwork critic;
  ReplayBuffer buffer{3, 1};

  explicit PendulumFixture(std::uint64_t seed = 0)
      : set(envs::make_env_set(envs::Domain::kPendulumSwingup, std::vector<double>{1.0, 1.1, 1.4},
                               std::vector<double>{1.5})) {
    std::mt19937_64 rng(seed);
    pi_k = nn::GaussianPolicy(nn::PolicySpec{3, 1, {16, 16}});
    pi_k.init(rng);
    pi_ref = nn::GaussianPolicy(nn::PolicySpec{3, 1, {16, 16}});
    pi_ref.init(rng);
    critic = nn::QNetwork(nn::CriticSpec{3, 1, {16, 16}});
    critic.init(rng);
    rt::collect_random(set.nominal, 600, rng, buffer);
  }

  std::vector<std::shared_ptr<const envs::DynamicsModel>> models(bool singleton = false) const {
    std::vector<std::shared_ptr<const envs::DynamicsModel>> out;
    for (const auto& m : set.training_set) {
      out.push_back(std::make_shared<envs::EnvModel>(m));
      if (singleton) break;
    }
    return out;
  }
};

RobustnessSpec make_spec(Mode mode, Objective obj, double tau,
                         std::vector<std::shared_ptr<const envs::DynamicsModel>> models) {
  RobustnessSpec s;
  s.mode = mode;
  s.objective = obj;
  s.tau = tau;
  s.models = std::move(models);
  return s;
}

}  // namespace

TEST(ReplayBuffer, FifoEvictionAndUniformSampling) {
  ReplayBuffer buf(1, 1, 4);
  for (int i = 0; i < 6; ++i) {
    Transition t{{double(i)}, {0.0}, double(i), {double(i + 1)}, {}};
    buf.add(t);
  }
  EXPECT_EQ(buf.size(), 4u);
  EXPECT_EQ(buf.at(0).reward, 2.0);
  EXPECT_EQ(buf.at(3).reward, 5.0);
  auto all = buf.all();
  EXPECT_EQ(all.rewards, (nn::Vector(4) << 2, 3, 4, 5).finished());

  std::mt19937_64 rng(0);
  auto batch = buf.sample(40000, rng);
  std::array<int, 4> counts{};
  for (Eigen::Index i = 0; i < batch.size(); ++i) ++counts[static_cast<int>(batch.rewards[i]) - 2];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 10000.0) * (c - 10000.0) / 10000.0;
  EXPECT_LT(chi2, 11.34);  // chi-square, 3 dof, p = 0.01
  EXPECT_THROW(buf.add(Transition{{0.0, 1.0}, {0.0}, 0.0, {0.0}, {}}), ShapeError);
  EXPECT_THROW(buf.add(Transition{{NAN}, {0.0}, 0.0, {0.0}, {}}), DomainError);
}

TEST(TdTarget, SingletonSetCollapsesAllModesBitwise) {
  PendulumFixture f;
  std::mt19937_64 batch_rng(1);
  auto batch = f.buffer.sample(128, batch_rng);
  for (auto obj : {Objective::kExpected, Objective::kEntropyRegularized}) {
    std::vector<nn::Vector> targets;
    for (Mode mode : {Mode::kNonRobust, Mode::kRobust, Mode::kSoftRobust}) {
      TdTargetComputer td(make_spec(mode, obj, 0.5, f.models(true)), {});
      std::mt19937_64 rng(7);
      targets.push_back(td.compute(batch, f.critic, f.pi_k, f.pi_ref, rng).targets);
    }
    EXPECT_EQ(targets[0], targets[1]);
    EXPECT_EQ(targets[0], targets[2]);
  }
}

TEST(TdTarget, ZeroTemperatureMatchesExpectedObjectiveExactly) {
  PendulumFixture f;
  std::mt19937_64 batch_rng(2);
  auto batch = f.buffer.sample(64, batch_rng);
  for (Mode mode : {Mode::kNonRobust, Mode::kRobust, Mode::kSoftRobust}) {
    TdTargetComputer a(make_spec(mode, Objective::kExpected, 0.0, f.models()), {});
    TdTargetComputer b(make_spec(mode, Objective::kEntropyRegularized, 0.0, f.models()), {});
    std::mt19937_64 r1(3), r2(3);
    EXPECT_EQ(a.compute(batch, f.critic, f.pi_k, f.pi_ref, r1).targets,
              b.compute(batch, f.critic, f.pi_k, f.pi_ref, r2).targets);
  }
}

TEST(TdTarget, RobustBelowSoftBelowMaxAndCandidatesMatchExplicitComputation) {
  PendulumFixture f;
  std::mt19937_64 batch_rng(3);
  auto batch = f.buffer.sample(64, batch_rng);
  const double tau = 0.3, gamma = 0.99;
  TdTargetComputer robust(make_spec(Mode::kRobust, Objective::kEntropyRegularized, tau, f.models()), {});
  TdTargetComputer soft(make_spec(Mode::kSoftRobust, Objective::kEntropyRegularized, tau, f.models()), {});
  std::mt19937_64 r1(4), r2(4);
  auto rt = robust.compute(batch, f.critic, f.pi_k, f.pi_ref, r1);
  auto st = soft.compute(batch, f.critic, f.pi_k, f.pi_ref, r2);

  // Recompute every candidate by stepping each model by hand.
  std::mt19937_64 r3(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> noise(batch.size());
  for (auto& z : noise) z = normal(r3);
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    double lo = INFINITY, hi = -INFINITY, avg = 0.0;
    for (std::size_t k = 0; k < f.set.training_set.size(); ++k) {
      envs::EnvModel m = f.set.training_set[k];
      m.set_state(batch.states[b]);
      m.step(std::vector<double>{batch.actions(b, 0)});
      auto o = m.observation();
      nn::Matrix obs = Eigen::Map<nn::Matrix>(o.data(), 1, 3);
      auto d = f.pi_k.distribution(obs);
      nn::Matrix a(1, 1);
      a(0, 0) = std::clamp(d.mean(0, 0) + d.std(0, 0) * noise[b], -1.0, 1.0);
      const double c =
          f.critic.value(obs, a)[0] - tau * nn::kl(d, f.pi_ref.distribution(obs))[0];
      EXPECT_NEAR(c, rt.candidates(b, k), 1e-12);
      lo = std::min(lo, c);
      hi = std::max(hi, c);
      avg += c / 3.0;
    }
    EXPECT_NEAR(rt.targets[b], batch.rewards[b] + gamma * lo, 1e-12);
    EXPECT_NEAR(st.targets[b], batch.rewards[b] + gamma * avg, 1e-12);
    EXPECT_LE(rt.targets[b], st.targets[b] + 1e-12);
    EXPECT_LE(st.targets[b], batch.rewards[b] + gamma * hi + 1e-12);
  }
}

TEST(TdTarget, FullQEqualsQTildeMinusTauKl) {
  PendulumFixture f;
  auto all = f.buffer.all();
  const double tau = 0.7;
  nn::Vector q = full_q(f.critic, f.pi_k, f.pi_ref, all.obs, all.actions, tau);
  for (Eigen::Index i = 0; i < 20; ++i) {
    nn::Matrix o = all.obs.row(i), a = all.actions.row(i);
    auto p = f.pi_k.distribution(o), r = f.pi_ref.distribution(o);
    const double mu_p = p.mean(0, 0), s_p = p.std(0, 0), mu_r = r.mean(0, 0), s_r = r.std(0, 0);
    const double kl = std::log(s_r / s_p) + (s_p * s_p + (mu_p - mu_r) * (mu_p - mu_r)) / (2 * s_r * s_r) - 0.5;
    EXPECT_NEAR(q[i], f.critic.value(o, a)[0] - tau * kl, 1e-12);
  }
}

TEST(TdTarget, TargetsFrozenWithinAPeriod) {
  PendulumFixture f;
  CriticPair critic(f.critic, 1000);
  TdTargetComputer td(make_spec(Mode::kRobust, Objective::kExpected, 0.0, f.models()), {});
  nn::Adam opt;
  std::mt19937_64 batch_rng(5);
  auto probe = f.buffer.sample(32, batch_rng);
  std::mt19937_64 r1(6);
  auto before = td.compute(probe, critic.target, f.pi_k, f.pi_ref, r1).targets;
  std::mt19937_64 train_rng(7);
  for (int i = 0; i < 20; ++i) critic_update(f.buffer.sample(32, train_rng), critic, f.pi_k, f.pi_k, td, opt, train_rng);
  std::mt19937_64 r2(6);
  EXPECT_EQ(before, td.compute(probe, critic.target, f.pi_k, f.pi_ref, r2).targets);
  EXPECT_NE(critic.online.params().values(), critic.target.params().values());
}

TEST(TdTarget, DivergentModelStepIsSkipped) {
  class Exploding final : public envs::DynamicsModel {
   public:
    envs::Domain domain() const override { return envs::Domain::kPendulumSwingup; }
    void set_state(const envs::EnvState& s) override { s_ = s; }
    envs::EnvState get_state() const override { return s_; }
    envs::StepResult step(std::span<const double>) override { throw PhysicsError("boom"); }
    std::unique_ptr<envs::DynamicsModel> clone() const override { return std::make_unique<Exploding>(); }

   private:
    envs::EnvState s_;
  };
  PendulumFixture f;
  auto models = f.models();
  models.push_back(std::make_shared<Exploding>());
  TdTargetComputer td(make_spec(Mode::kRobust, Objective::kExpected, 0.0, models), {});
  std::mt19937_64 rng(8);
  auto batch = f.buffer.sample(16, rng);
  auto res = td.compute(batch, f.critic, f.pi_k, f.pi_ref, rng);
  EXPECT_EQ(res.skipped, 16);
  EXPECT_TRUE(res.targets.allFinite());
  CriticPair critic(f.critic, 200);
  nn::Adam opt;
  auto step = critic_update(batch, critic, f.pi_k, f.pi_ref, td, opt, rng);
  EXPECT_EQ(step.skipped, 16);
  EXPECT_EQ(step.loss, 0.0);
}

TEST(CriticUpdate, ZeroRewardConvergesToZero) {
  PendulumFixture f;
  ReplayBuffer zero(3, 1, 1000);
  for (std::size_t i = 0; i < f.buffer.size(); ++i) {
    auto t = f.buffer.at(i);
    t.reward = 0.0;
    zero.add(t);
  }
  CriticPair critic(f.critic, 10);
  TdTargetComputer td(make_spec(Mode::kNonRobust, Objective::kExpected, 0.0, {}), {0.99, 1});
  nn::Adam opt(nn::AdamConfig{1e-3});
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20000; ++i) critic_update(zero.sample(64, rng), critic, f.pi_k, f.pi_k, td, opt, rng);
  auto all = zero.all();
  EXPECT_LT(critic.online.value(all.obs, all.actions).cwiseAbs().maxCoeff(), 0.05);
}

TEST(CriticUpdate, LossMovingAverageDecreasesOnFrozenBuffer) {
  PendulumFixture f;
  CriticPair critic(f.critic, 100000);
  TdTargetComputer td(make_spec(Mode::kRobust, Objective::kEntropyRegularized, 0.1, f.models()), {});
  nn::Adam opt;
  std::mt19937_64 rng(10);
  auto frozen = f.buffer.sample(256, rng);
  std::vector<double> losses;
  for (int i = 0; i < 5000; ++i) {
    std::mt19937_64 noise_rng(11);  // same next-action noise every step
    losses.push_back(critic_update(frozen, critic, f.pi_k, f.pi_ref, td, opt, noise_rng).loss);
  }
  double previous = INFINITY;
  for (std::size_t start = 0; start + 100 <= losses.size(); start += 100) {
    double avg = 0.0;
    for (std::size_t i = start; i < start + 100; ++i) avg += losses[i] / 100.0;
    EXPECT_LE(avg, previous * (1.0 + 1e-9)) << "window at " << start;
    previous = avg;
  }
}

TEST(CriticUpdate, MatchesTabularRobustEvaluationOnEmbeddedChain) {
  // 5-cell chain; the nominal model moves right by one, the perturbed model by
  // two. The policy always pushes right.
  const int n = 5;
  const double gamma = 0.9;
  std::vector<std::shared_ptr<const envs::DynamicsModel>> models{std::make_shared<ChainModel>(n, 1),
                                                                 std::make_shared<ChainModel>(n, 2)};
  auto kernel = [&](int right_step) {
    std::vector<double> probs(n * 2 * n, 0.0);
    for (int s = 0; s < n; ++s) {
      probs[(s * 2 + 0) * n + std::max(s - 1, 0)] = 1.0;
      probs[(s * 2 + 1) * n + std::min(s + right_step, n - 1)] = 1.0;
    }
    return mdp::Kernel(n, 2, probs);
  };
  std::vector<double> reward(n * 2, 0.0);
  reward[(n - 1) * 2] = reward[(n - 1) * 2 + 1] = 1.0;
  mdp::TabularMdp tab(n, 2, reward, gamma);
  std::vector<std::size_t> right(n, 1);
  auto pi_tab = mdp::TabularPolicy::deterministic(2, right);

  nn::GaussianPolicy pi(nn::PolicySpec{n, 1, {8}, true, 0.0, 0.3});
  pi.params().values().setZero();
  auto& layout = pi.params().layout();
  auto out_bias = pi.params().block(layout.size() - 1);
  out_bias(0, 0) = std::atanh(0.5);
  out_bias(0, 1) = std::log(std::expm1(0.01));

  for (Mode mode : {Mode::kRobust, Mode::kSoftRobust}) {
    mdp::UncertaintySet set({kernel(1), kernel(2)});
    auto exact = mdp::policy_evaluate_exact(tab, set, pi_tab, mdp::RegularizationSpec::none(n, 2), mode, 1e-12);

    ReplayBuffer buf(n, 1, 1000);
    ChainModel nominal(n, 1);
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 20; ++rep) {
      for (int s = 0; s < n; ++s) {
        envs::EnvState st;
        st.x = s;
        nominal.set_state(st);
        Transition t;
        t.env_state = st;
        t.obs = nominal.observation();
        nn::Matrix o = Eigen::Map<nn::Matrix>(t.obs.data(), 1, n);
        auto d = pi.distribution(o);
        t.action = {d.mean(0, 0) + d.std(0, 0) * std::normal_distribution<double>()(rng)};
        t.reward = nominal.step(t.action).reward;
        t.next_obs = nominal.observation();
        buf.add(t);
      }
    }
    nn::QNetwork q(nn::CriticSpec{n, 1, {32, 32}});
    q.init(rng);
    CriticPair critic(q, 50);
    TdTargetComputer td(make_spec(mode, Objective::kExpected, 0.0, models), {gamma, 1});
    nn::Adam opt(nn::AdamConfig{3e-3});
    for (int i = 0; i < 8000; ++i) critic_update(buf.sample(32, rng), critic, pi, pi, td, opt, rng);

    const double v_max = 1.0 / (1.0 - gamma);
    for (int s = 0; s < n; ++s) {
      nn::Matrix o = nn::Matrix::Zero(1, n);
      o(0, s) = 1.0;
      nn::Matrix a = pi.distribution(o).mean;
      EXPECT_NEAR(critic.online.value(o, a)[0], exact.values[s], 0.05 * v_max)
          << to_string(mode) << " state " << s;
    }
  }
}

TEST(TabularTd, SingletonSampledTdConvergesToClassicalValue) {
  std::mt19937_64 rng(13);
  auto inst = rt::random_instance(rng, 4, 2, 1, 0.8);
  auto pi = rt::random_policy(rng, 4, 2);
  TabularTdOptions opt;
  opt.target = TabularTarget::kSampled;
  opt.step_exponent = 0.7;
  auto rep = tabular_td_equivalence_harness(inst.mdp, inst.set, &pi, mdp::RegularizationSpec::none(4, 2),
                                            Mode::kNonRobust, opt);
  EXPECT_LT(rep.gap, 5e-2);
  EXPECT_LT(rep.gap_trace.back(), rep.gap_trace.front());
}

TEST(TabularTd, TwoKernelRobustGapBelowOnePercent) {
  std::mt19937_64 rng(14);
  auto inst = rt::random_instance(rng, 3, 2, 2, 0.9);
  auto pi = rt::random_policy(rng, 3, 2);
  auto rep = tabular_td_equivalence_harness(inst.mdp, inst.set, &pi, mdp::RegularizationSpec::none(3, 2),
                                            Mode::kRobust);
  EXPECT_LT(rep.gap, 1e-2);
  auto control = tabular_td_equivalence_harness(inst.mdp, inst.set, nullptr,
                                                mdp::RegularizationSpec{0.5, mdp::TabularPolicy::uniform(3, 2)},
                                                Mode::kRobust);
  EXPECT_LT(control.gap, 1e-2);
}

TEST(TabularTd, SoftRobustMatchesAveragedKernel) {
  std::mt19937_64 rng(15);
  auto inst = rt::random_instance(rng, 3, 2, 3, 0.9);
  mdp::UncertaintySet uniform(inst.set.kernels());
  mdp::UncertaintySet averaged({uniform.average_kernel()});
  auto pi = rt::random_policy(rng, 3, 2);
  auto reg = mdp::RegularizationSpec::none(3, 2);
  TabularTdOptions opt;
  opt.samples = 50000;
  auto soft = tabular_td_equivalence_harness(inst.mdp, uniform, &pi, reg, Mode::kSoftRobust, opt);
  auto avg = tabular_td_equivalence_harness(inst.mdp, averaged, &pi, reg, Mode::kNonRobust, opt);
  for (std::size_t i = 0; i < soft.q.size(); ++i) EXPECT_NEAR(soft.q[i], avg.q[i], 1e-10);
}

TEST(TabularTd, A2InstanceControlGap) {
  auto inst = rt::a2_instance();
  auto rep = tabular_td_equivalence_harness(inst.mdp, inst.set, nullptr, mdp::RegularizationSpec::none(3, 2),
                                            Mode::kRobust);
  EXPECT_LT(rep.gap, 1e-2);
}
