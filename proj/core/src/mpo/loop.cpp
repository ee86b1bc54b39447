#include "robust_ctrl/mpo/loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "robust_ctrl/errors.hpp"
#include "robust_ctrl/policy_eval/replay.hpp"

namespace robust_ctrl::mpo {

bool EpisodeMetrics::same_stream(const EpisodeMetrics& o) const {
  auto eq = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  return episode == o.episode && eq(nominal_return, o.nominal_return) && eq(critic_loss, o.critic_loss) &&
         eq(eta, o.eta) && eq(kl_mu, o.kl_mu) && eq(kl_sigma, o.kl_sigma) && skipped_targets == o.skipped_targets &&
         env_index == o.env_index;
}

std::vector<std::shared_ptr<const envs::DynamicsModel>> training_models(const envs::EnvSet& env_set) {
  std::vector<std::shared_ptr<const envs::DynamicsModel>> out;
  for (const auto& m : env_set.training_set) out.push_back(std::make_shared<envs::EnvModel>(m));
  return out;
}

nn::Matrix clamp_actions(nn::Matrix actions) { return actions.cwiseMax(-1.0).cwiseMin(1.0); }

TrainResult run_actor_critic(const envs::EnvSet& env_set, const policy_eval::RobustnessSpec& spec,
                             const LoopConfig& config, const nn::PolicySpec& policy_spec, PolicyImprover& improver,
                             const EpisodeCallback& on_episode) {
  using Clock = std::chrono::steady_clock;
  if (config.episodes < 0) throw ConfigError("episodes must be >= 0");
  if (config.batch_size == 0 || config.steps_per_round <= 0 || config.learner_steps_per_round < 0) {
    throw ConfigError("invalid learner schedule");
  }
  if (config.limited_dr && env_set.training_set.empty()) throw ConfigError("limited DR needs a training set");

  // Independent streams so that, e.g., the robust and non-robust modes consume
  // identical randomness for acting and replay sampling.
  std::seed_seq seq{config.seed, std::uint64_t{0x5eed}};
  std::vector<std::uint64_t> seeds(7);
  seq.generate(seeds.begin(), seeds.end());
  std::mt19937_64 init_rng(seeds[0]), env_rng(seeds[1]), act_rng(seeds[2]), replay_rng(seeds[3]),
      td_rng(seeds[4]), improve_rng(seeds[5]), dr_rng(seeds[6]);

  const auto domain = env_set.nominal.domain();
  const auto obs_dim = static_cast<Eigen::Index>(envs::observation_dim(domain));
  nn::PolicySpec ps = policy_spec;
  ps.obs_dim = obs_dim;
  ps.action_dim = envs::kActionDim;

  TrainResult result;
  result.policy = nn::GaussianPolicy(ps);
  result.policy.init(init_rng);
  result.critic = nn::QNetwork(nn::CriticSpec{obs_dim, ps.action_dim, config.critic_hidden});
  result.critic.init(init_rng);

  nn::GaussianPolicy pi_k = result.policy;     // target policy being evaluated
  nn::GaussianPolicy pi_prev = result.policy;  // reference policy for the KL penalty
  policy_eval::CriticPair critic(result.critic, config.target_period);
  policy_eval::TdTargetComputer targets(spec, config.td);
  nn::Adam critic_opt(nn::AdamConfig{config.critic_learning_rate});
  policy_eval::ReplayBuffer buffer(static_cast<std::size_t>(obs_dim), envs::kActionDim, config.replay_capacity);

  std::uniform_int_distribution<std::size_t> pick_env(0, env_set.training_set.empty() ? 0 : env_set.training_set.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uint64_t total_steps = 0;
  ImproveStats last{std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0};

  try {
    for (int episode = 0; episode < config.episodes; ++episode) {
      const auto start = Clock::now();
      EpisodeMetrics m;
      m.episode = episode;
      envs::EnvModel env = env_set.nominal;
      if (config.limited_dr) {
        m.env_index = static_cast<int>(pick_env(dr_rng));
        env = env_set.training_set[static_cast<std::size_t>(m.env_index)];
      }
      env.reset(env_rng);
      double loss_sum = 0.0;
      int loss_count = 0;
      nn::Matrix obs(1, obs_dim);
      while (!env.episode_done()) {
        policy_eval::Transition t;
        t.env_state = env.get_state();
        t.obs = env.observation();
        for (Eigen::Index c = 0; c < obs_dim; ++c) obs(0, c) = t.obs[c];
        const auto dist = result.policy.distribution(obs);
        t.action.resize(envs::kActionDim);
        for (std::size_t c = 0; c < envs::kActionDim; ++c) {
          const auto col = static_cast<Eigen::Index>(c);
          t.action[c] = std::clamp(dist.mean(0, col) + dist.std(0, col) * normal(act_rng), -1.0, 1.0);
        }
        t.reward = env.step(t.action).reward;
        t.next_obs = env.observation();
        m.nominal_return += t.reward;
        buffer.add(t);
        ++total_steps;

        if (total_steps % static_cast<std::uint64_t>(config.steps_per_round) == 0 &&
            buffer.size() >= std::max(config.min_replay, config.batch_size)) {
          for (int l = 0; l < config.learner_steps_per_round; ++l) {
            const auto batch = buffer.sample(config.batch_size, replay_rng);
            const auto step = policy_eval::critic_update(batch, critic, pi_k, pi_prev, targets, critic_opt, td_rng);
            loss_sum += step.loss;
            ++loss_count;
            m.skipped_targets += step.skipped;
            last = improver.improve(batch, result.policy, pi_k, critic.online, improve_rng);
          }
          pi_prev = pi_k;
          pi_k = result.policy;
        }
      }
      m.critic_loss = loss_count > 0 ? loss_sum / loss_count : std::numeric_limits<double>::quiet_NaN();
      m.eta = last.eta;
      m.kl_mu = last.kl_mu;
      m.kl_sigma = last.kl_sigma;
      m.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      result.metrics.push_back(m);
      if (on_episode) on_episode(m);
    }
  } catch (const PhysicsError& e) {
    result.aborted = true;
    result.abort_reason = e.what();
  } catch (const TrainingError& e) {
    result.aborted = true;
    result.abort_reason = e.what();
  } catch (const DivergenceError& e) {
    result.aborted = true;
    result.abort_reason = e.what();
  }
  result.critic = critic.online;
  return result;
}

}  // namespace robust_ctrl::mpo
