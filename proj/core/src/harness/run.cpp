#include "robust_ctrl/harness/run.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "robust_ctrl/errors.hpp"
#include "robust_ctrl/nn/checkpoint.hpp"

namespace robust_ctrl::harness {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kResultsFormat = "robust-ctrl-results-1";

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{seed, tag, index};
  std::uint64_t out[1];
  seq.generate(out, out + 1);
  return out[0];
}

// Holdout positions ordered by distance from the nominal perturbation.
std::vector<std::size_t> holdout_order(const envs::EnvSet& set) {
  const double nominal = set.nominal.params().perturbation();
  std::vector<std::size_t> order(set.holdout_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(set.holdout_set[a].params().perturbation() - nominal) <
           std::abs(set.holdout_set[b].params().perturbation() - nominal);
  });
  return order;
}

json policy_spec_json(const nn::PolicySpec& s) {
  return json{{"obs_dim", s.obs_dim},   {"action_dim", s.action_dim}, {"hidden", s.hidden},
              {"tanh_mean", s.tanh_mean}, {"min_std", s.min_std},     {"init_std", s.init_std}};
}

void aggregate(ResultTable& table, const std::vector<double>& values, int n_eval) {
  for (std::size_t r = 0; r < values.size(); ++r) {
    std::vector<double> means;
    for (const auto& s : table.seeds) {
      if (!s.aborted) means.push_back(s.holdout_means[r]);
    }
    ResultRow row;
    row.env_index = r;
    row.perturbation_value = values[r];
    row.n_seeds = static_cast<int>(means.size());
    row.n_eval_episodes = n_eval;
    if (means.empty()) {
      row.mean_return = row.std_return = std::numeric_limits<double>::quiet_NaN();
    } else {
      double sum = 0.0;
      for (double m : means) sum += m;
      row.mean_return = sum / static_cast<double>(means.size());
      double ss = 0.0;
      for (double m : means) ss += (m - row.mean_return) * (m - row.mean_return);
      row.std_return = means.size() > 1 ? std::sqrt(ss / static_cast<double>(means.size() - 1)) : 0.0;
    }
    table.rows.push_back(row);
  }
}

ResultTable empty_table(const ExperimentConfig& config, const envs::EnvSet& set) {
  ResultTable t;
  t.name = config.name;
  t.domain = envs::to_string(config.domain);
  t.perturbed_parameter = set.nominal.params().perturbed_parameter();
  return t;
}

std::string metrics_csv(const std::vector<mpo::EpisodeMetrics>& metrics) {
  std::ostringstream out;
  out << "episode,nominal_return,critic_loss,eta,kl_mu,kl_sigma,wall_ms,env_index\n";
  for (const auto& m : metrics) {
    out << m.episode << ',' << num(m.nominal_return) << ',' << num(m.critic_loss) << ',' << num(m.eta) << ','
        << num(m.kl_mu) << ',' << num(m.kl_sigma) << ',' << num(m.wall_ms) << ',' << m.env_index << '\n';
  }
  return out.str();
}

std::vector<std::shared_ptr<const envs::DynamicsModel>> uncertainty_models(const ExperimentConfig& config,
                                                                           const envs::EnvSet& set,
                                                                           const LogFn& log) {
  if (config.uncertainty == UncertaintySource::kSimulators || config.mode == mdp::Mode::kNonRobust ||
      config.limited_dr) {
    return mpo::training_models(set);
  }
  std::vector<ddr::LearnedModel> models;
  fs::create_directories(config.output_dir / "models");
  for (std::size_t i = 0; i < set.training_set.size(); ++i) {
    const auto data = ddr::generate_dataset(set.training_set[i], config.ddr.dataset_size,
                                            derived_seed(config.ddr.fit.seed, 0xdd5e7, i));
    auto fit = ddr::fit_model(data, config.ddr.fit);
    if (log) {
      log("model " + std::to_string(i) + " (" + num(set.training_set[i].params().perturbation()) +
          "): held-out mse " + num(fit.heldout_mse));
    }
    fit.model.save((config.output_dir / "models" / ("model_" + std::to_string(i) + ".ckpt")).string());
    models.push_back(std::move(fit.model));
  }
  return ddr::ddr_uncertainty_set(models);
}

mpo::TrainResult train_one(const ExperimentConfig& config, const envs::EnvSet& set,
                           const policy_eval::RobustnessSpec& spec, std::uint64_t seed,
                           const mpo::EpisodeCallback& cb) {
  mpo::LoopConfig loop = config.loop;
  loop.episodes = config.episodes;
  loop.seed = seed;
  if (config.algorithm == Algorithm::kSvg) return svg::train_svg(set, spec, config.svg, loop, cb);
  if (config.limited_dr) return mpo::limited_dr_train(set, spec, config.mpo, loop, cb);
  return mpo::train(set, spec, config.mpo, loop, cb);
}

// Runs `fn(i)` for i in [0, n) on up to worker_threads() threads and
// rethrows the first failure after all workers finish.
template <typename F>
void parallel_for(std::size_t n, F fn) {
  const std::size_t workers = std::min<std::size_t>(worker_threads(), n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void expect_keys(const json& j, const std::set<std::string>& keys, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!keys.count(it.key())) throw ConfigError(path + "." + it.key() + ": unknown key");
  }
  for (const auto& k : keys) {
    if (!j.contains(k)) throw ConfigError(path + "." + k + ": missing");
  }
}

double number_or_nan(const json& v, const std::string& path) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) throw ConfigError(path + ": must be a number or null");
  return v.get<double>();
}

}  // namespace

EvalResult eval_controller(const Controller& controller, const envs::EnvModel& env, int n_episodes,
                           std::uint64_t seed, const envs::EnvState* start) {
  if (n_episodes < 1) throw ConfigError("n_eval_episodes must be >= 1");
  envs::EnvModel e = env;
  std::mt19937_64 rng(seed);
  EvalResult out;
  for (int ep = 0; ep < n_episodes; ++ep) {
    if (start) {
      e.set_state(*start);
    } else {
      e.reset(rng);
    }
    double total = 0.0;
    while (!e.episode_done()) {
      const double a[1] = {std::clamp(controller(e), -1.0, 1.0)};
      total += e.step(a).reward;
    }
    out.returns.push_back(total);
  }
  double sum = 0.0;
  for (double r : out.returns) sum += r;
  out.mean = sum / static_cast<double>(n_episodes);
  double ss = 0.0;
  for (double r : out.returns) ss += (r - out.mean) * (r - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(n_episodes));
  return out;
}

EvalResult eval_policy(const nn::GaussianPolicy& policy, const envs::EnvModel& env, int n_episodes,
                       std::uint64_t seed) {
  const auto dim = static_cast<Eigen::Index>(envs::observation_dim(env.domain()));
  if (policy.spec().obs_dim != dim) throw ShapeError("policy observation size does not match the environment");
  auto mean_action = [&](const envs::EnvModel& e) {
    const auto obs = e.observation();
    nn::Matrix row = Eigen::Map<const nn::Matrix>(obs.data(), 1, dim);
    const double a = policy.distribution(row).mean(0, 0);
    if (!std::isfinite(a)) throw PhysicsError("policy produced a non-finite action");
    return a;
  };
  return eval_controller(mean_action, env, n_episodes, seed);
}

void save_policy(const fs::path& path, const nn::GaussianPolicy& policy) {
  nn::Checkpoint ck;
  ck.metadata_json = json{{"kind", "policy"}, {"spec", policy_spec_json(policy.spec())}}.dump();
  ck.arrays = {{"params", policy.params().values()}};
  nn::save_checkpoint(path.string(), ck);
}

nn::GaussianPolicy load_policy(const fs::path& path) {
  const auto ck = nn::load_checkpoint(path.string());
  nn::PolicySpec spec;
  try {
    const auto meta = json::parse(ck.metadata_json);
    if (meta.at("kind").get<std::string>() != "policy") throw ConfigError(path.string() + " is not a policy checkpoint");
    const auto& s = meta.at("spec");
    spec.obs_dim = s.at("obs_dim").get<Eigen::Index>();
    spec.action_dim = s.at("action_dim").get<Eigen::Index>();
    spec.hidden = s.at("hidden").get<std::vector<Eigen::Index>>();
    spec.tanh_mean = s.at("tanh_mean").get<bool>();
    spec.min_std = s.at("min_std").get<double>();
    spec.init_std = s.at("init_std").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError("policy checkpoint metadata: " + std::string(e.what()));
  }
  nn::GaussianPolicy policy(spec);
  const auto& values = ck.array("params");
  if (values.size() != policy.params().size()) throw ConfigError("policy checkpoint size does not match its spec");
  policy.params().set_values(values);
  return policy;
}

void save_critic(const fs::path& path, const nn::QNetwork& critic) {
  nn::Checkpoint ck;
  ck.metadata_json = json{{"kind", "critic"},
                          {"obs_dim", critic.spec().obs_dim},
                          {"action_dim", critic.spec().action_dim},
                          {"hidden", critic.spec().hidden}}
                         .dump();
  ck.arrays = {{"params", critic.params().values()}};
  nn::save_checkpoint(path.string(), ck);
}

bool ResultTable::any_aborted() const {
  return std::any_of(seeds.begin(), seeds.end(), [](const SeedOutcome& s) { return s.aborted; });
}

std::string results_json(const ResultTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"env_index", r.env_index},
                    {"perturbation_value", r.perturbation_value},
                    {"mean_return", num_or_null(r.mean_return)},
                    {"std_return", num_or_null(r.std_return)},
                    {"n_seeds", r.n_seeds},
                    {"n_eval_episodes", r.n_eval_episodes}});
  }
  json seeds = json::array();
  for (const auto& s : t.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"aborted", s.aborted},
                     {"abort_reason", s.abort_reason},
                     {"episodes_completed", s.episodes_completed},
                     {"holdout_means", s.holdout_means}});
  }
  json j{{"format", kResultsFormat}, {"name", t.name},  {"domain", t.domain}, {"perturbed_parameter", t.perturbed_parameter},
         {"rows", rows},             {"seeds", seeds}};
  return j.dump(2) + "\n";
}

std::string results_csv(const ResultTable& t) {
  std::ostringstream out;
  out << "env_index,perturbation_value,mean_return,std_return,n_seeds,n_eval_episodes\n";
  for (const auto& r : t.rows) {
    out << r.env_index << ',' << num(r.perturbation_value) << ',' << num(r.mean_return) << ',' << num(r.std_return)
        << ',' << r.n_seeds << ',' << r.n_eval_episodes << '\n';
  }
  return out.str();
}

ResultTable parse_results_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("results are not valid JSON: ") + e.what());
  }
  expect_keys(j, {"format", "name", "domain", "perturbed_parameter", "rows", "seeds"}, "results");
  if (j["format"] != kResultsFormat) throw ConfigError("results.format: unsupported format");
  for (const char* k : {"name", "domain", "perturbed_parameter"}) {
    if (!j[k].is_string()) throw ConfigError(std::string("results.") + k + ": must be a string");
  }
  ResultTable t;
  t.name = j["name"];
  t.domain = j["domain"];
  t.perturbed_parameter = j["perturbed_parameter"];
  if (!j["rows"].is_array()) throw ConfigError("results.rows: must be an array");
  for (std::size_t i = 0; i < j["rows"].size(); ++i) {
    const auto& r = j["rows"][i];
    const std::string path = "results.rows[" + std::to_string(i) + "]";
    expect_keys(r, {"env_index", "perturbation_value", "mean_return", "std_return", "n_seeds", "n_eval_episodes"},
                path);
    ResultRow row;
    if (!r["env_index"].is_number_unsigned() || r["env_index"].get<std::size_t>() != i) {
      throw ConfigError(path + ".env_index: must equal the row position");
    }
    row.env_index = i;
    if (!r["perturbation_value"].is_number()) throw ConfigError(path + ".perturbation_value: must be a number");
    row.perturbation_value = r["perturbation_value"];
    row.mean_return = number_or_nan(r["mean_return"], path + ".mean_return");
    row.std_return = number_or_nan(r["std_return"], path + ".std_return");
    if (row.std_return < 0.0) throw ConfigError(path + ".std_return: must be >= 0");
    if (!r["n_seeds"].is_number_unsigned()) throw ConfigError(path + ".n_seeds: must be a non-negative integer");
    if (!r["n_eval_episodes"].is_number_unsigned() || r["n_eval_episodes"].get<int>() < 1) {
      throw ConfigError(path + ".n_eval_episodes: must be a positive integer");
    }
    row.n_seeds = r["n_seeds"];
    row.n_eval_episodes = r["n_eval_episodes"];
    if ((row.n_seeds == 0) != std::isnan(row.mean_return)) {
      throw ConfigError(path + ".mean_return: must be null exactly when n_seeds is 0");
    }
    t.rows.push_back(row);
  }
  if (!j["seeds"].is_array()) throw ConfigError("results.seeds: must be an array");
  for (std::size_t i = 0; i < j["seeds"].size(); ++i) {
    const auto& s = j["seeds"][i];
    const std::string path = "results.seeds[" + std::to_string(i) + "]";
    expect_keys(s, {"seed", "aborted", "abort_reason", "episodes_completed", "holdout_means"}, path);
    SeedOutcome o;
    if (!s["seed"].is_number_unsigned()) throw ConfigError(path + ".seed: must be a non-negative integer");
    if (!s["aborted"].is_boolean()) throw ConfigError(path + ".aborted: must be a boolean");
    if (!s["abort_reason"].is_string()) throw ConfigError(path + ".abort_reason: must be a string");
    if (!s["episodes_completed"].is_number_unsigned()) {
      throw ConfigError(path + ".episodes_completed: must be a non-negative integer");
    }
    const auto& means = s["holdout_means"];
    if (!means.is_array() || !std::all_of(means.begin(), means.end(), [](const json& v) { return v.is_number(); })) {
      throw ConfigError(path + ".holdout_means: must be an array of numbers");
    }
    o.seed = s["seed"];
    o.aborted = s["aborted"];
    o.abort_reason = s["abort_reason"];
    o.episodes_completed = s["episodes_completed"];
    o.holdout_means = means.get<std::vector<double>>();
    if (o.holdout_means.size() != (o.aborted ? 0 : t.rows.size())) {
      throw ConfigError(path + ".holdout_means: needs one entry per row unless aborted");
    }
    t.seeds.push_back(o);
  }
  return t;
}

unsigned worker_threads() {
  if (const char* env = std::getenv("ROBUST_CTRL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError("ROBUST_CTRL_THREADS must be a positive integer");
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

ResultTable run_experiment(const ExperimentConfig& config, const LogFn& log) {
  config.validate();
  const auto set = config.env_set();
  fs::create_directories(config.output_dir);
  write_file_atomic(config.output_dir / "config.json", to_json(config) + "\n");

  std::mutex log_mutex;
  LogFn safe_log;
  if (log) {
    safe_log = [&](const std::string& line) {
      std::lock_guard<std::mutex> lock(log_mutex);
      log(line);
    };
  }

  policy_eval::RobustnessSpec spec;
  spec.mode = config.limited_dr ? mdp::Mode::kNonRobust : config.mode;
  spec.objective = config.objective;
  spec.tau = config.tau;
  spec.weights = config.weights;
  spec.models = uncertainty_models(config, set, safe_log);

  const auto order = holdout_order(set);
  std::vector<double> values;
  for (auto i : order) values.push_back(set.holdout_set[i].params().perturbation());

  ResultTable table = empty_table(config, set);
  table.seeds.resize(config.seeds.size());
  parallel_for(config.seeds.size(), [&](std::size_t k) {
    const std::uint64_t seed = config.seeds[k];
    const fs::path dir = config.output_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    auto cb = [&](const mpo::EpisodeMetrics& m) {
      if (safe_log && (m.episode + 1) % 50 == 0) {
        safe_log(config.name + " seed " + std::to_string(seed) + " episode " + std::to_string(m.episode + 1) +
                 " return " + num(m.nominal_return));
      }
    };
    auto result = train_one(config, set, spec, seed, cb);
    SeedOutcome& out = table.seeds[k];
    out.seed = seed;
    out.aborted = result.aborted;
    out.abort_reason = result.abort_reason;
    out.episodes_completed = static_cast<int>(result.metrics.size());
    write_file_atomic(dir / "metrics.csv", metrics_csv(result.metrics));
    save_policy(dir / "policy.ckpt.tmp", result.policy);
    fs::rename(dir / "policy.ckpt.tmp", dir / "policy.ckpt");
    save_critic(dir / "critic.ckpt.tmp", result.critic);
    fs::rename(dir / "critic.ckpt.tmp", dir / "critic.ckpt");
    if (!out.aborted) {
      try {
        for (std::size_t r = 0; r < order.size(); ++r) {
          const auto ev = eval_policy(result.policy, set.holdout_set[order[r]], config.n_eval_episodes,
                                      derived_seed(seed, 0xe7a1, r));
          out.holdout_means.push_back(ev.mean);
        }
      } catch (const PhysicsError& e) {
        out.aborted = true;
        out.abort_reason = std::string("evaluation: ") + e.what();
        out.holdout_means.clear();
      }
    }
    const json status{{"seed", seed},
                      {"aborted", out.aborted},
                      {"abort_reason", out.abort_reason},
                      {"episodes_completed", out.episodes_completed}};
    write_file_atomic(dir / "status", status.dump(2) + "\n");
    if (safe_log) {
      safe_log(config.name + " seed " + std::to_string(seed) + (out.aborted ? " aborted: " + out.abort_reason : " done"));
    }
  });

  aggregate(table, values, config.n_eval_episodes);
  write_file_atomic(config.output_dir / "results.json", results_json(table));
  write_file_atomic(config.output_dir / "results.csv", results_csv(table));
  return table;
}

ResultTable eval_checkpoint(const fs::path& checkpoint, const ExperimentConfig& config) {
  config.validate();
  const auto set = config.env_set();
  const auto policy = load_policy(checkpoint);
  const auto order = holdout_order(set);
  std::vector<double> values;
  for (auto i : order) values.push_back(set.holdout_set[i].params().perturbation());
  ResultTable table = empty_table(config, set);
  for (auto seed : config.seeds) {
    SeedOutcome out;
    out.seed = seed;
    for (std::size_t r = 0; r < order.size(); ++r) {
      out.holdout_means.push_back(
          eval_policy(policy, set.holdout_set[order[r]], config.n_eval_episodes, derived_seed(seed, 0xe7a1, r)).mean);
    }
    table.seeds.push_back(out);
  }
  aggregate(table, values, config.n_eval_episodes);
  return table;
}

StudyKind study_kind_from_string(const std::string& name) {
  if (name == "larger_test_set") return StudyKind::kLargerTestSet;
  if (name == "modify_uncertainty") return StudyKind::kModifyUncertainty;
  if (name == "extra_samples") return StudyKind::kExtraSamples;
  if (name == "limited_dr") return StudyKind::kLimitedDr;
  if (name == "ddr_grid") return StudyKind::kDdrGrid;
  if (name == "nominal_choice") return StudyKind::kNominalChoice;
  throw ConfigError("unknown study kind '" + name + "'");
}

const char* to_string(StudyKind kind) {
  switch (kind) {
    case StudyKind::kLargerTestSet:
      return "larger_test_set";
    case StudyKind::kModifyUncertainty:
      return "modify_uncertainty";
    case StudyKind::kExtraSamples:
      return "extra_samples";
    case StudyKind::kLimitedDr:
      return "limited_dr";
    case StudyKind::kDdrGrid:
      return "ddr_grid";
    case StudyKind::kNominalChoice:
      return "nominal_choice";
  }
  return "unknown";
}

std::vector<StudyCell> expand_study(StudyKind kind, const ExperimentConfig& base) {
  std::vector<StudyCell> cells;
  auto add = [&](const std::string& label, auto edit) {
    ExperimentConfig c = base;
    c.limited_dr = false;
    edit(c);
    c.name = base.name + "_" + label;
    c.output_dir = base.output_dir / label;
    c.validate();
    cells.push_back({label, std::move(c)});
  };
  auto with_mode = [](mdp::Mode m) { return [m](ExperimentConfig& c) { c.mode = m; }; };
  const mdp::Mode modes[] = {mdp::Mode::kRobust, mdp::Mode::kSoftRobust, mdp::Mode::kNonRobust};

  switch (kind) {
    case StudyKind::kLargerTestSet: {
      std::string preset_name;
      if (base.domain == envs::Domain::kPendulumSwingup) preset_name = "pendulum_swingup_larger_test_set";
      else if (base.domain == envs::Domain::kCartpoleBalance) preset_name = "cartpole_balance_larger_test_set";
      else throw ConfigError("larger_test_set is defined for pendulum_swingup and cartpole_balance");
      const auto& p = envs::preset(preset_name);
      for (auto m : modes) {
        add(mdp::to_string(m), [&](ExperimentConfig& c) {
          c.mode = m;
          c.training_values = p.training_values;
          c.holdout_values = p.holdout_values;
        });
      }
      break;
    }
    case StudyKind::kModifyUncertainty: {
      std::vector<double> thirds;
      if (base.domain == envs::Domain::kPendulumSwingup) thirds = {1.2, 1.3, 2.0};
      else if (base.domain == envs::Domain::kCartpoleBalance) thirds = {1.5, 2.5, 3.5};
      else throw ConfigError("modify_uncertainty is defined for pendulum_swingup and cartpole_balance");
      if (base.training_values.size() != 3) throw ConfigError("modify_uncertainty needs three training values");
      for (double v : thirds) {
        add("robust_third_" + num(v), [&](ExperimentConfig& c) {
          c.mode = mdp::Mode::kRobust;
          c.training_values[2] = v;
        });
      }
      add("non_robust", with_mode(mdp::Mode::kNonRobust));
      break;
    }
    case StudyKind::kExtraSamples:
      add("non_robust_1x", with_mode(mdp::Mode::kNonRobust));
      add("non_robust_3x", [](ExperimentConfig& c) {
        c.mode = mdp::Mode::kNonRobust;
        c.episodes *= 3;
      });
      add("robust_1x", with_mode(mdp::Mode::kRobust));
      add("soft_robust_1x", with_mode(mdp::Mode::kSoftRobust));
      break;
    case StudyKind::kLimitedDr:
      if (base.algorithm != Algorithm::kMpo) throw ConfigError("limited_dr study needs algorithm mpo");
      add("robust", with_mode(mdp::Mode::kRobust));
      add("limited_dr", [](ExperimentConfig& c) {
        c.mode = mdp::Mode::kNonRobust;
        c.limited_dr = true;
      });
      break;
    case StudyKind::kDdrGrid:
      for (Eigen::Index n : {100, 1000, 10000, 100000, 1000000}) {
        add("ddr_" + std::to_string(n), [n](ExperimentConfig& c) {
          c.mode = mdp::Mode::kRobust;
          c.uncertainty = UncertaintySource::kLearned;
          c.ddr.dataset_size = n;
        });
      }
      add("simulators", [](ExperimentConfig& c) {
        c.mode = mdp::Mode::kRobust;
        c.uncertainty = UncertaintySource::kSimulators;
      });
      add("non_robust", with_mode(mdp::Mode::kNonRobust));
      break;
    case StudyKind::kNominalChoice:
      for (auto choice : {envs::NominalChoice::kSmallest, envs::NominalChoice::kMedian, envs::NominalChoice::kLargest}) {
        for (auto m : modes) {
          add(std::string(envs::to_string(choice)) + "_" + mdp::to_string(m), [&](ExperimentConfig& c) {
            c.mode = m;
            c.nominal = choice;
          });
        }
      }
      break;
  }
  return cells;
}

bool StudyResult::any_aborted() const {
  return std::any_of(tables.begin(), tables.end(), [](const ResultTable& t) { return t.any_aborted(); });
}

std::string study_csv(const StudyResult& study) {
  std::ostringstream out;
  out << "cell,env_index,perturbation_value,mean_return,std_return,n_seeds,n_eval_episodes\n";
  for (std::size_t i = 0; i < study.tables.size(); ++i) {
    for (const auto& r : study.tables[i].rows) {
      out << study.labels[i] << ',' << r.env_index << ',' << num(r.perturbation_value) << ',' << num(r.mean_return)
          << ',' << num(r.std_return) << ',' << r.n_seeds << ',' << r.n_eval_episodes << '\n';
    }
  }
  return out.str();
}

StudyResult run_study(StudyKind kind, const ExperimentConfig& base, const LogFn& log) {
  const auto cells = expand_study(kind, base);
  StudyResult study;
  for (const auto& cell : cells) {
    if (log) log("study " + std::string(to_string(kind)) + ": cell " + cell.label);
    study.labels.push_back(cell.label);
    study.tables.push_back(run_experiment(cell.config, log));
  }
  fs::create_directories(base.output_dir);
  write_file_atomic(base.output_dir / "study.csv", study_csv(study));
  return study;
}

}  // namespace robust_ctrl::harness
