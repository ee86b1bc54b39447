#include <benchmark/benchmark.h>

#include <random>

#include "robust_ctrl/envs/env.hpp"
#include "robust_ctrl/mdp/tabular.hpp"
#include "robust_ctrl/mpo/loop.hpp"
#include "robust_ctrl/mpo/mpo.hpp"
#include "robust_ctrl/policy_eval/replay.hpp"
#include "robust_ctrl/policy_eval/td.hpp"

using namespace robust_ctrl;

namespace {

envs::EnvSet pendulum_set() {
  const double training[] = {1.0, 1.1, 1.4};
  const double holdout[] = {1.5};
  return envs::make_env_set(envs::Domain::kPendulumSwingup, training, holdout);
}

policy_eval::Batch random_batch(std::size_t n, std::uint64_t seed) {
  auto env = pendulum_set().nominal;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  policy_eval::ReplayBuffer buffer(envs::observation_dim(env.domain()), envs::kActionDim, n);
  env.reset(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (env.episode_done()) env.reset(rng);
    policy_eval::Transition t;
    t.env_state = env.get_state();
    t.obs = env.observation();
    t.action = {u(rng)};
    t.reward = env.step(t.action).reward;
    t.next_obs = env.observation();
    buffer.add(t);
  }
  return buffer.all();
}

struct Nets {
  nn::GaussianPolicy policy;
  nn::QNetwork critic;
};

Nets make_nets(Eigen::Index width) {
  std::mt19937_64 rng(1);
  Nets n{nn::GaussianPolicy(nn::PolicySpec{3, 1, {width, width}, false, 1e-4, 0.3}),
         nn::QNetwork(nn::CriticSpec{3, 1, {width, width}})};
  n.policy.init(rng);
  n.critic.init(rng);
  return n;
}

mdp::TabularMdp random_mdp(std::size_t S, std::size_t A, std::mt19937_64& rng, std::vector<mdp::Kernel>& kernels) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> r(S * A);
  for (auto& x : r) x = u(rng);
  for (int k = 0; k < 3; ++k) {
    std::vector<double> p(S * A * S);
    for (std::size_t row = 0; row < S * A; ++row) {
      double total = 0.0;
      for (std::size_t s = 0; s < S; ++s) total += p[row * S + s] = u(rng);
      for (std::size_t s = 0; s < S; ++s) p[row * S + s] /= total;
    }
    kernels.emplace_back(S, A, std::move(p));
  }
  return mdp::TabularMdp(S, A, std::move(r), 0.99);
}

}  // namespace

static void BM_PendulumStep(benchmark::State& state) {
  auto env = pendulum_set().nominal;
  std::mt19937_64 rng(0);
  env.reset(rng);
  const double a[1] = {0.3};
  for (auto _ : state) {
    if (env.episode_done()) env.reset(rng);
    benchmark::DoNotOptimize(env.step(a));
  }
}
BENCHMARK(BM_PendulumStep);

static void BM_RobustBellmanSweep(benchmark::State& state) {
  const auto S = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(0);
  std::vector<mdp::Kernel> kernels;
  const auto m = random_mdp(S, 4, rng, kernels);
  const mdp::UncertaintySet set(kernels);
  auto reg = mdp::RegularizationSpec::none(S, 4);
  reg.tau = 0.1;
  mdp::ValueFunction v(S, 0.0);
  for (auto _ : state) {
    v = mdp::optimal_bellman_apply(v, m, set, reg, mdp::Mode::kRobust).values;
    benchmark::DoNotOptimize(v.data());
  }
}
BENCHMARK(BM_RobustBellmanSweep)->Arg(6)->Arg(64);

static void BM_TdTargets(benchmark::State& state) {
  const auto set = pendulum_set();
  policy_eval::RobustnessSpec spec;
  spec.mode = static_cast<mdp::Mode>(state.range(0));
  spec.objective = policy_eval::Objective::kEntropyRegularized;
  spec.tau = 0.1;
  spec.models = mpo::training_models(set);
  policy_eval::TdTargetComputer targets(spec, {});
  const auto batch = random_batch(128, 2);
  const auto nets = make_nets(64);
  std::mt19937_64 rng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(targets.compute(batch, nets.critic, nets.policy, nets.policy, rng).targets.data());
  }
  state.SetLabel(mdp::to_string(spec.mode));
}
BENCHMARK(BM_TdTargets)
    ->Arg(static_cast<int>(mdp::Mode::kNonRobust))
    ->Arg(static_cast<int>(mdp::Mode::kRobust))
    ->Arg(static_cast<int>(mdp::Mode::kSoftRobust));

static void BM_CriticUpdate(benchmark::State& state) {
  const auto set = pendulum_set();
  policy_eval::RobustnessSpec spec;
  spec.mode = mdp::Mode::kRobust;
  spec.objective = policy_eval::Objective::kEntropyRegularized;
  spec.tau = 0.1;
  spec.models = mpo::training_models(set);
  policy_eval::TdTargetComputer targets(spec, {});
  const auto batch = random_batch(128, 4);
  auto nets = make_nets(64);
  policy_eval::CriticPair critic(nets.critic, 200);
  nn::Adam adam(nn::AdamConfig{3e-4});
  std::mt19937_64 rng(5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(policy_eval::critic_update(batch, critic, nets.policy, nets.policy, targets, adam, rng));
  }
}
BENCHMARK(BM_CriticUpdate);

static void BM_MpoImprove(benchmark::State& state) {
  const auto batch = random_batch(128, 6);
  auto nets = make_nets(64);
  const auto pi_k = nets.policy;
  mpo::MpoImprover improver(mpo::MpoConfig{});
  std::mt19937_64 rng(7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(improver.improve(batch, nets.policy, pi_k, nets.critic, rng));
  }
}
BENCHMARK(BM_MpoImprove);
BENCHMARK_MAIN();
