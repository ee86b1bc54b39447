#pragma once

// Experiment configuration: one JSON document per experiment, validated
// strictly (unknown keys and out-of-range values raise ConfigError with the
// offending path).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "robust_ctrl/ddr/ddr.hpp"
#include "robust_ctrl/envs/env.hpp"
#include "robust_ctrl/mpo/mpo.hpp"
#include "robust_ctrl/svg/svg.hpp"

namespace robust_ctrl::harness {

enum class Algorithm { kMpo, kSvg };
enum class UncertaintySource { kSimulators, kLearned };

const char* to_string(Algorithm algorithm);
const char* to_string(UncertaintySource source);

struct DdrSettings {
  Eigen::Index dataset_size = 100000;
  ddr::FitConfig fit;
};

struct ExperimentConfig {
  std::string name = "experiment";
  envs::Domain domain = envs::Domain::kPendulumSwingup;
  Algorithm algorithm = Algorithm::kMpo;
  /// Non-robust MPO acting in uniformly drawn training environments.
  bool limited_dr = false;

  mdp::Mode mode = mdp::Mode::kRobust;
  policy_eval::Objective objective = policy_eval::Objective::kEntropyRegularized;
  double tau = 0.1;
  std::vector<double> weights;
  UncertaintySource uncertainty = UncertaintySource::kSimulators;
  DdrSettings ddr;

  std::vector<double> training_values{1.0, 1.1, 1.4};
  std::vector<double> holdout_values{1.5, 1.6, 1.7};
  envs::NominalChoice nominal = envs::NominalChoice::kSmallest;

  int episodes = 1500;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int n_eval_episodes = 30;

  mpo::LoopConfig loop;  // episodes and seed are taken from the fields above
  mpo::MpoConfig mpo;
  svg::SvgConfig svg;

  std::filesystem::path output_dir = "runs/experiment";

  void validate() const;
  envs::EnvSet env_set() const;
};

/// Parses and validates a config document. Relative output directories are
/// resolved against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of every field (the resolved config), pretty-printed.
std::string to_json(const ExperimentConfig& config);

}  // namespace robust_ctrl::harness
