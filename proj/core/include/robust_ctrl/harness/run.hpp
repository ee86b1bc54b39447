#pragma once

// Seeded multi-run training, holdout evaluation and result tables.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "robust_ctrl/harness/config.hpp"
#include "robust_ctrl/nn/policy.hpp"

namespace robust_ctrl::harness {

/// Action in [-1, 1] for the environment's current state.
using Controller = std::function<double(const envs::EnvModel& env)>;

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over episodes
  std::vector<double> returns;
};

/// Undiscounted episode returns from `n_episodes` resets drawn from `seed`,
/// or from `start` for every episode when given.
EvalResult eval_controller(const Controller& controller, const envs::EnvModel& env, int n_episodes,
                           std::uint64_t seed, const envs::EnvState* start = nullptr);
/// Deterministic evaluation with the policy mean action.
EvalResult eval_policy(const nn::GaussianPolicy& policy, const envs::EnvModel& env, int n_episodes,
                       std::uint64_t seed);

void save_policy(const std::filesystem::path& path, const nn::GaussianPolicy& policy);
nn::GaussianPolicy load_policy(const std::filesystem::path& path);
void save_critic(const std::filesystem::path& path, const nn::QNetwork& critic);

struct ResultRow {
  std::size_t env_index = 0;
  double perturbation_value = 0.0;
  double mean_return = 0.0;  // mean over completed seeds of the per-seed mean return
  double std_return = 0.0;   // sample standard deviation of the per-seed means
  int n_seeds = 0;
  int n_eval_episodes = 0;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool aborted = false;
  std::string abort_reason;
  int episodes_completed = 0;
  std::vector<double> holdout_means;  // one per row, empty when aborted
};

struct ResultTable {
  std::string name;
  std::string domain;
  std::string perturbed_parameter;
  std::vector<ResultRow> rows;
  std::vector<SeedOutcome> seeds;

  bool any_aborted() const;
};

std::string results_json(const ResultTable& table);
std::string results_csv(const ResultTable& table);
/// Validates a results.json document against the published schema
/// (schemas/results.schema.json) and parses it. Throws ConfigError.
ResultTable parse_results_json(const std::string& text);

/// Worker count: ROBUST_CTRL_THREADS if set, else the hardware concurrency.
unsigned worker_threads();

using LogFn = std::function<void(const std::string&)>;

/// Trains every seed, evaluates on the holdout set and writes the run
/// directory: results.json, results.csv, config.json and seed_<k>/ with
/// metrics.csv, policy.ckpt, critic.ckpt and status.
ResultTable run_experiment(const ExperimentConfig& config, const LogFn& log = {});

/// Evaluates a saved policy on the config's holdout set (seeds from the config).
ResultTable eval_checkpoint(const std::filesystem::path& checkpoint, const ExperimentConfig& config);

enum class StudyKind { kLargerTestSet, kModifyUncertainty, kExtraSamples, kLimitedDr, kDdrGrid, kNominalChoice };
StudyKind study_kind_from_string(const std::string& name);
const char* to_string(StudyKind kind);

struct StudyCell {
  std::string label;
  ExperimentConfig config;
};

/// The grid of configs a study runs; each cell writes to output_dir/<label>.
std::vector<StudyCell> expand_study(StudyKind kind, const ExperimentConfig& base);

struct StudyResult {
  std::vector<std::string> labels;
  std::vector<ResultTable> tables;
  bool any_aborted() const;
};

/// Runs every cell and writes study.csv with one row per (cell, holdout env).
StudyResult run_study(StudyKind kind, const ExperimentConfig& base, const LogFn& log = {});
std::string study_csv(const StudyResult& study);

/// Atomic write: temporary file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace robust_ctrl::harness
