#include "robust_ctrl/harness/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::harness {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ConfigError(path + ": " + message);
}

// Object reader that remembers which keys were consumed so leftovers can be
// reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  bool read(const std::string& key, T& out) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(at(key), "has the wrong type");
    }
    return true;
  }

  bool read_number(const std::string& key, double& out) {
    if (!j_.contains(key)) return false;
    if (!j_.at(key).is_number()) fail(at(key), "must be a number");
    return read(key, out);
  }

  template <typename Int>
  bool read_int(const std::string& key, Int& out) {
    if (!j_.contains(key)) return false;
    if (!j_.at(key).is_number_integer()) fail(at(key), "must be an integer");
    return read(key, out);
  }

  bool read_bool(const std::string& key, bool& out) {
    if (!j_.contains(key)) return false;
    if (!j_.at(key).is_boolean()) fail(at(key), "must be a boolean");
    return read(key, out);
  }

  bool read_string(const std::string& key, std::string& out) {
    if (!j_.contains(key)) return false;
    if (!j_.at(key).is_string()) fail(at(key), "must be a string");
    return read(key, out);
  }

  bool read_numbers(const std::string& key, std::vector<double>& out) {
    if (!j_.contains(key)) return false;
    const auto& v = j_.at(key);
    if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); })) {
      fail(at(key), "must be an array of numbers");
    }
    return read(key, out);
  }

  bool read_sizes(const std::string& key, std::vector<Eigen::Index>& out) {
    if (!j_.contains(key)) return false;
    const auto& v = j_.at(key);
    if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); })) {
      fail(at(key), "must be an array of integers");
    }
    read(key, out);
    for (auto w : out) {
      if (w <= 0) fail(at(key), "layer widths must be positive");
    }
    return true;
  }

  const json* child(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
auto parse_enum(const std::string& path, const std::string& value, F convert) {
  try {
    return convert(value);
  } catch (const Error&) {
    fail(path, "unknown value '" + value + "'");
  }
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "mpo") return Algorithm::kMpo;
  if (s == "svg") return Algorithm::kSvg;
  throw ConfigError("unknown algorithm");
}

UncertaintySource source_from_string(const std::string& s) {
  if (s == "simulators") return UncertaintySource::kSimulators;
  if (s == "learned") return UncertaintySource::kLearned;
  throw ConfigError("unknown uncertainty source");
}

void positive(const std::string& path, double v) {
  if (!(std::isfinite(v) && v > 0.0)) fail(path, "must be > 0");
}

void parse_ddr(const json& j, DdrSettings& d) {
  Reader r(j, "robustness.ddr");
  r.read_int("dataset_size", d.dataset_size);
  r.read_sizes("hidden", d.fit.hidden);
  r.read_int("epochs", d.fit.epochs);
  r.read_int("max_steps", d.fit.max_steps);
  r.read_int("batch_size", d.fit.batch_size);
  r.read_number("learning_rate", d.fit.learning_rate);
  r.read_int("seed", d.fit.seed);
  r.finish();
}

void parse_robustness(const json& j, ExperimentConfig& c) {
  Reader r(j, "robustness");
  std::string s;
  if (r.read_string("mode", s)) c.mode = parse_enum(r.at("mode"), s, mdp::mode_from_string);
  if (r.read_string("objective", s)) c.objective = parse_enum(r.at("objective"), s, policy_eval::objective_from_string);
  r.read_number("tau", c.tau);
  r.read_numbers("weights", c.weights);
  if (r.read_string("uncertainty", s)) c.uncertainty = parse_enum(r.at("uncertainty"), s, source_from_string);
  if (const json* d = r.child("ddr")) parse_ddr(*d, c.ddr);
  r.finish();
}

void parse_loop(const json& j, mpo::LoopConfig& l) {
  Reader r(j, "loop");
  r.read_int("batch_size", l.batch_size);
  r.read_int("replay_capacity", l.replay_capacity);
  r.read_int("steps_per_round", l.steps_per_round);
  r.read_int("learner_steps_per_round", l.learner_steps_per_round);
  r.read_int("min_replay", l.min_replay);
  r.read_int("target_period", l.target_period);
  r.read_number("critic_learning_rate", l.critic_learning_rate);
  r.read_number("discount", l.td.discount);
  r.read_int("next_action_samples", l.td.next_action_samples);
  r.finish();
}

void parse_mpo(const json& j, mpo::MpoConfig& m) {
  Reader r(j, "mpo");
  r.read_number("epsilon", m.epsilon);
  r.read_number("epsilon_mu", m.m_step.epsilon_mu);
  r.read_number("epsilon_sigma", m.m_step.epsilon_sigma);
  r.read_int("n_action_samples", m.n_action_samples);
  r.read_number("policy_learning_rate", m.policy_learning_rate);
  r.read_number("dual_learning_rate", m.m_step.dual_learning_rate);
  r.read_number("min_std", m.policy.min_std);
  r.read_number("init_std", m.policy.init_std);
  r.finish();
}

void parse_svg(const json& j, svg::SvgConfig& s) {
  Reader r(j, "svg");
  r.read_number("alpha", s.alpha);
  r.read_number("policy_learning_rate", s.policy_learning_rate);
  double min_variance = s.policy.min_std * s.policy.min_std;
  if (r.read_number("min_variance", min_variance)) {
    if (!(min_variance > 0.0)) fail("svg.min_variance", "must be > 0");
    s.policy.min_std = std::sqrt(min_variance);
  }
  r.read_bool("tanh_on_mean", s.policy.tanh_mean);
  r.read_bool("clip_actions", s.clip_actions);
  r.read_number("init_std", s.policy.init_std);
  r.finish();
}

}  // namespace

const char* to_string(Algorithm a) { return a == Algorithm::kMpo ? "mpo" : "svg"; }
const char* to_string(UncertaintySource s) { return s == UncertaintySource::kSimulators ? "simulators" : "learned"; }

void ExperimentConfig::validate() const {
  if (name.empty()) fail("name", "must not be empty");
  if (episodes < 0) fail("episodes", "must be >= 0");
  if (seeds.empty()) fail("seeds", "must list at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) fail("seeds", "must be unique");
  if (n_eval_episodes < 1) fail("n_eval_episodes", "must be >= 1");
  if (training_values.empty()) fail("training_values", "must not be empty");
  if (holdout_values.empty()) fail("holdout_values", "must not be empty");
  if (!(tau >= 0.0) || !std::isfinite(tau)) fail("robustness.tau", "must be >= 0");
  if (!weights.empty()) {
    if (weights.size() != training_values.size()) fail("robustness.weights", "needs one weight per training value");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) fail("robustness.weights", "must be finite and >= 0");
      total += w;
    }
    if (!(total > 0.0)) fail("robustness.weights", "must not all be zero");
  }
  if (limited_dr && algorithm != Algorithm::kMpo) fail("limited_dr", "is only defined for mpo");
  if (uncertainty == UncertaintySource::kLearned && ddr.dataset_size < 10) {
    fail("robustness.ddr.dataset_size", "must be >= 10");
  }
  if (ddr.fit.epochs < 0 || ddr.fit.max_steps < 0 || ddr.fit.batch_size == 0) fail("robustness.ddr", "invalid fit schedule");
  if (!(ddr.fit.learning_rate > 0.0)) fail("robustness.ddr.learning_rate", "must be > 0");
  if (loop.batch_size == 0) fail("loop.batch_size", "must be >= 1");
  if (loop.replay_capacity < loop.batch_size) fail("loop.replay_capacity", "must hold at least one batch");
  if (loop.steps_per_round <= 0) fail("loop.steps_per_round", "must be >= 1");
  if (loop.learner_steps_per_round < 0) fail("loop.learner_steps_per_round", "must be >= 0");
  if (loop.target_period <= 0) fail("loop.target_period", "must be >= 1");
  positive("loop.critic_learning_rate", loop.critic_learning_rate);
  if (!(loop.td.discount > 0.0 && loop.td.discount < 1.0)) fail("loop.discount", "must lie in (0, 1)");
  if (loop.td.next_action_samples < 1) fail("loop.next_action_samples", "must be >= 1");
  positive("mpo.epsilon", mpo.epsilon);
  positive("mpo.epsilon_mu", mpo.m_step.epsilon_mu);
  positive("mpo.epsilon_sigma", mpo.m_step.epsilon_sigma);
  positive("mpo.policy_learning_rate", mpo.policy_learning_rate);
  positive("mpo.dual_learning_rate", mpo.m_step.dual_learning_rate);
  positive("mpo.min_std", mpo.policy.min_std);
  positive("mpo.init_std", mpo.policy.init_std);
  if (mpo.n_action_samples < 1) fail("mpo.n_action_samples", "must be >= 1");
  if (!(svg.alpha >= 0.0) || !std::isfinite(svg.alpha)) fail("svg.alpha", "must be >= 0");
  positive("svg.policy_learning_rate", svg.policy_learning_rate);
  positive("svg.init_std", svg.policy.init_std);
  try {
    (void)env_set();
  } catch (const ConfigError& e) {
    fail("training_values/holdout_values", e.what());
  }
}

envs::EnvSet ExperimentConfig::env_set() const {
  return envs::make_env_set(domain, training_values, holdout_values, nominal);
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader r(j, "");
  std::string s;
  r.read_string("name", c.name);
  if (r.read_string("preset", s)) {
    const auto& p = parse_enum("preset", s, [](const std::string& n) -> const envs::PerturbationPreset& {
      return envs::preset(n);
    });
    if (!p.simulated) fail("preset", "'" + s + "' is not simulated in this build");
    c.domain = envs::domain_from_string(p.domain);
    c.training_values = p.training_values;
    c.holdout_values = p.holdout_values;
  }
  if (r.read_string("domain", s)) c.domain = parse_enum("domain", s, envs::domain_from_string);
  if (r.read_string("algorithm", s)) c.algorithm = parse_enum("algorithm", s, algorithm_from_string);
  r.read_bool("limited_dr", c.limited_dr);
  if (const json* rob = r.child("robustness")) parse_robustness(*rob, c);
  r.read_numbers("training_values", c.training_values);
  r.read_numbers("holdout_values", c.holdout_values);
  if (r.read_string("nominal", s)) c.nominal = parse_enum("nominal", s, envs::nominal_choice_from_string);
  r.read_int("episodes", c.episodes);
  if (r.has("seeds")) {
    const json* seeds = r.child("seeds");
    if (!seeds->is_array() ||
        !std::all_of(seeds->begin(), seeds->end(), [](const json& e) { return e.is_number_unsigned(); })) {
      fail("seeds", "must be an array of non-negative integers");
    }
    c.seeds = seeds->get<std::vector<std::uint64_t>>();
  }
  r.read_int("n_eval_episodes", c.n_eval_episodes);
  if (const json* nets = r.child("networks")) {
    Reader n(*nets, "networks");
    std::vector<Eigen::Index> policy;
    if (n.read_sizes("policy", policy)) {
      c.mpo.policy.hidden = policy;
      c.svg.policy.hidden = policy;
    }
    n.read_sizes("critic", c.loop.critic_hidden);
    n.finish();
  }
  if (const json* l = r.child("loop")) parse_loop(*l, c.loop);
  if (const json* m = r.child("mpo")) parse_mpo(*m, c.mpo);
  if (const json* v = r.child("svg")) parse_svg(*v, c.svg);
  c.output_dir = "runs/" + c.name;
  if (r.read_string("output_dir", s)) c.output_dir = s;
  if (c.output_dir.is_relative() && !base_dir.empty()) c.output_dir = base_dir / c.output_dir;
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["domain"] = envs::to_string(c.domain);
  j["algorithm"] = to_string(c.algorithm);
  j["limited_dr"] = c.limited_dr;
  j["robustness"] = {{"mode", mdp::to_string(c.mode)},
                     {"objective", policy_eval::to_string(c.objective)},
                     {"tau", c.tau},
                     {"weights", c.weights},
                     {"uncertainty", to_string(c.uncertainty)},
                     {"ddr",
                      {{"dataset_size", c.ddr.dataset_size},
                       {"hidden", c.ddr.fit.hidden},
                       {"epochs", c.ddr.fit.epochs},
                       {"max_steps", c.ddr.fit.max_steps},
                       {"batch_size", c.ddr.fit.batch_size},
                       {"learning_rate", c.ddr.fit.learning_rate},
                       {"seed", c.ddr.fit.seed}}}};
  j["training_values"] = c.training_values;
  j["holdout_values"] = c.holdout_values;
  j["nominal"] = envs::to_string(c.nominal);
  j["episodes"] = c.episodes;
  j["seeds"] = c.seeds;
  j["n_eval_episodes"] = c.n_eval_episodes;
  j["networks"] = {{"policy", c.algorithm == Algorithm::kMpo ? c.mpo.policy.hidden : c.svg.policy.hidden},
                   {"critic", c.loop.critic_hidden}};
  j["loop"] = {{"batch_size", c.loop.batch_size},
               {"replay_capacity", c.loop.replay_capacity},
               {"steps_per_round", c.loop.steps_per_round},
               {"learner_steps_per_round", c.loop.learner_steps_per_round},
               {"min_replay", c.loop.min_replay},
               {"target_period", c.loop.target_period},
               {"critic_learning_rate", c.loop.critic_learning_rate},
               {"discount", c.loop.td.discount},
               {"next_action_samples", c.loop.td.next_action_samples}};
  j["mpo"] = {{"epsilon", c.mpo.epsilon},
              {"epsilon_mu", c.mpo.m_step.epsilon_mu},
              {"epsilon_sigma", c.mpo.m_step.epsilon_sigma},
              {"n_action_samples", c.mpo.n_action_samples},
              {"policy_learning_rate", c.mpo.policy_learning_rate},
              {"dual_learning_rate", c.mpo.m_step.dual_learning_rate},
              {"min_std", c.mpo.policy.min_std},
              {"init_std", c.mpo.policy.init_std}};
  j["svg"] = {{"alpha", c.svg.alpha},
              {"policy_learning_rate", c.svg.policy_learning_rate},
              {"min_variance", c.svg.policy.min_std * c.svg.policy.min_std},
              {"tanh_on_mean", c.svg.policy.tanh_mean},
              {"clip_actions", c.svg.clip_actions},
              {"init_std", c.svg.policy.init_std}};
  j["output_dir"] = c.output_dir.string();
  return j.dump(2);
}

}  // namespace robust_ctrl::harness
