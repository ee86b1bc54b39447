#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "robust_ctrl/errors.hpp"
#include "robust_ctrl/harness/run.hpp"
#include "robust_ctrl/mdp/io.hpp"

namespace {

using namespace robust_ctrl;

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

void log_line(const std::string& line) { std::cerr << line << std::endl; }

int finish(const harness::ResultTable& table) {
  std::cout << harness::results_csv(table);
  if (table.any_aborted()) {
    for (const auto& s : table.seeds) {
      if (s.aborted) std::cerr << "seed " << s.seed << " aborted: " << s.abort_reason << '\n';
    }
    return kRuntimeError;
  }
  return kOk;
}

int solve_mdp(const std::string& path, const std::string& mode, double tau, double tol) {
  mdp::RobustMdp model = [&] {
    try {
      return mdp::load_mdp(path);
    } catch (const ShapeError& e) {
      throw ConfigError(e.what());
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }();
  const auto& m = model.mdp;
  auto reg = mdp::RegularizationSpec::none(m.n_states(), m.n_actions());
  reg.tau = tau;
  const auto vi = mdp::value_iteration(m, model.set, reg, mdp::mode_from_string(mode), tol);
  nlohmann::json policy = nlohmann::json::array();
  for (std::size_t s = 0; s < m.n_states(); ++s) {
    const auto row = vi.greedy.row(s);
    policy.push_back(std::vector<double>(row.begin(), row.end()));
  }
  const nlohmann::json out{{"mode", mode},           {"tau", tau},
                           {"values", vi.values},    {"policy", policy},
                           {"iterations", vi.iterations}, {"converged", vi.converged}};
  std::cout << out.dump(2) << '\n';
  return vi.converged ? kOk : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust entropy-regularized actor-critic experiments"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, study_kind, mdp_path, mode = "robust";
  double tau = 0.0, tol = mdp::kDefaultTolerance;

  auto* run = app.add_subcommand("run", "Train every seed and evaluate on the holdout set");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* study = app.add_subcommand("study", "Run an investigative study grid");
  study->add_option("kind", study_kind,
                    "larger_test_set | modify_uncertainty | extra_samples | limited_dr | ddr_grid | nominal_choice")
      ->required();
  study->add_option("config", config_path, "Base experiment config (JSON)")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a policy checkpoint on the config's holdout set");
  eval->add_option("checkpoint", checkpoint_path, "Policy checkpoint")->required();
  eval->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* solve = app.add_subcommand("solve-mdp", "Tabular robust value iteration");
  solve->add_option("mdp", mdp_path, "MDP document (JSON)")->required();
  solve->add_option("--mode", mode, "non_robust | robust | soft_robust");
  solve->add_option("--tau", tau, "Entropy regularization strength (uniform reference)");
  solve->add_option("--tol", tol, "Sup-norm stopping tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return finish(harness::run_experiment(harness::load_config(config_path), log_line));
    if (*study) {
      const auto kind = harness::study_kind_from_string(study_kind);
      const auto result = harness::run_study(kind, harness::load_config(config_path), log_line);
      std::cout << harness::study_csv(result);
      return result.any_aborted() ? kRuntimeError : kOk;
    }
    if (*eval) return finish(harness::eval_checkpoint(checkpoint_path, harness::load_config(config_path)));
    if (*solve) return solve_mdp(mdp_path, mode, tau, tol);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
