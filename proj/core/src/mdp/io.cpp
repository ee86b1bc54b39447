#include "robust_ctrl/mdp/io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::mdp {
namespace {

using nlohmann::json;

std::size_t require_count(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_number_unsigned()) {
    throw ConfigError(std::string("MDP document needs a non-negative integer '") + key + "'");
  }
  return doc.at(key).get<std::size_t>();
}

std::vector<double> flatten_rows(const json& rows, std::size_t n_rows, std::size_t width,
                                 const char* what) {
  if (!rows.is_array() || rows.size() != n_rows) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(n_rows) + " rows");
  }
  std::vector<double> flat;
  flat.reserve(n_rows * width);
  for (const json& row : rows) {
    if (!row.is_array() || row.size() != width) {
      throw ShapeError(std::string(what) + ": expected rows of width " + std::to_string(width));
    }
    for (const json& x : row) flat.push_back(x.get<double>());
  }
  return flat;
}

}  // namespace

RobustMdp parse_mdp_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("MDP document is not valid JSON: ") + e.what());
  }
  const std::size_t n_s = require_count(doc, "n_states");
  const std::size_t n_a = require_count(doc, "n_actions");
  if (!doc.contains("discount")) throw ConfigError("MDP document needs 'discount'");
  if (!doc.contains("reward")) throw ConfigError("MDP document needs 'reward'");
  if (!doc.contains("kernels") || !doc.at("kernels").is_array()) {
    throw ConfigError("MDP document needs a 'kernels' array");
  }

  TabularMdp mdp(n_s, n_a, flatten_rows(doc.at("reward"), n_s, n_a, "reward"),
                 doc.at("discount").get<double>());
  std::vector<Kernel> kernels;
  for (const json& k : doc.at("kernels")) {
    kernels.emplace_back(n_s, n_a, flatten_rows(k, n_s * n_a, n_s, "kernel"));
  }
  if (doc.contains("weights")) {
    return RobustMdp{std::move(mdp),
                     UncertaintySet(std::move(kernels), doc.at("weights").get<std::vector<double>>())};
  }
  return RobustMdp{std::move(mdp), UncertaintySet(std::move(kernels))};
}

std::string to_mdp_json(const RobustMdp& model) {
  const std::size_t n_s = model.mdp.n_states();
  const std::size_t n_a = model.mdp.n_actions();
  json doc;
  doc["n_states"] = n_s;
  doc["n_actions"] = n_a;
  doc["discount"] = model.mdp.discount();
  json reward = json::array();
  for (std::size_t s = 0; s < n_s; ++s) {
    json row = json::array();
    for (std::size_t a = 0; a < n_a; ++a) row.push_back(model.mdp.reward(s, a));
    reward.push_back(std::move(row));
  }
  doc["reward"] = std::move(reward);
  json kernels = json::array();
  for (const Kernel& k : model.set.kernels()) {
    json rows = json::array();
    for (std::size_t s = 0; s < n_s; ++s) {
      for (std::size_t a = 0; a < n_a; ++a) {
        auto r = k.row(s, a);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
      }
    }
    kernels.push_back(std::move(rows));
  }
  doc["kernels"] = std::move(kernels);
  doc["weights"] = model.set.weights();
  return doc.dump(2);
}

RobustMdp load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open MDP file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_mdp_json(buffer.str());
}

void save_mdp(const RobustMdp& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write MDP file " + path.string());
  out << to_mdp_json(model) << '\n';
}

}  // namespace robust_ctrl::mdp
