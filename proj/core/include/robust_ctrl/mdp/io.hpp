#pragma once

#include <filesystem>
#include <string>

#include "robust_ctrl/mdp/tabular.hpp"

namespace robust_ctrl::mdp {

struct RobustMdp {
  TabularMdp mdp;
  UncertaintySet set;
};

// JSON document:
//   {"n_states": S, "n_actions": A, "discount": g,
//    "reward": [[r(s,a) ...] ...], "kernels": [[[p(s'|s,a) ...] ...] ...],
//    "weights": [w ...]}
// "reward" is S rows of A entries. Each kernel is S*A rows (row index s*A+a)
// of S probabilities. "weights" is optional (uniform if absent).
RobustMdp parse_mdp_json(const std::string& text);
std::string to_mdp_json(const RobustMdp& model);

RobustMdp load_mdp(const std::filesystem::path& path);
void save_mdp(const RobustMdp& model, const std::filesystem::path& path);

}  // namespace robust_ctrl::mdp
