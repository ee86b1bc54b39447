#include "robust_ctrl/ddr/ddr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "robust_ctrl/errors.hpp"
#include "robust_ctrl/nn/adam.hpp"
#include "robust_ctrl/nn/checkpoint.hpp"

namespace robust_ctrl::ddr {
namespace {

using nlohmann::json;

int angle_index(envs::Domain domain) { return domain == envs::Domain::kPendulumSwingup ? 0 : 1; }

json params_to_json(const envs::EnvParams& p) {
  return json{{"domain", envs::to_string(p.domain)},
              {"pole_length", p.pole_length},
              {"ball_mass", p.ball_mass},
              {"cart_mass", p.cart_mass},
              {"gravity", p.gravity},
              {"dt", p.dt},
              {"frame_skip", p.frame_skip},
              {"actuator_limit", p.actuator_limit},
              {"episode_length", p.episode_length}};
}

envs::EnvParams params_from_json(const json& j) {
  try {
    envs::EnvParams p = envs::EnvParams::defaults(envs::domain_from_string(j.at("domain").get<std::string>()));
    p.pole_length = j.at("pole_length").get<double>();
    p.ball_mass = j.at("ball_mass").get<double>();
    p.cart_mass = j.at("cart_mass").get<double>();
    p.gravity = j.at("gravity").get<double>();
    p.dt = j.at("dt").get<double>();
    p.frame_skip = j.at("frame_skip").get<int>();
    p.actuator_limit = j.at("actuator_limit").get<double>();
    p.episode_length = j.at("episode_length").get<int>();
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("environment parameters: ") + e.what());
  }
}

nn::Matrix raw_deltas(envs::Domain domain, const nn::Matrix& states, const nn::Matrix& next) {
  nn::Matrix d = next - states;
  const int a = angle_index(domain);
  for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, a) = envs::wrap_angle(d(r, a));
  return d;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

double read_f64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ConfigError("dataset blob is truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return std::bit_cast<double>(v);
}

nn::Vector column_mean(const nn::Matrix& m) { return m.colwise().mean().transpose(); }

nn::Vector column_std(const nn::Matrix& m, const nn::Vector& mean) {
  nn::Vector s = ((m.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!(s[i] > 1e-12)) s[i] = 1.0;
  }
  return s;
}

}  // namespace

OfflineDataset OfflineDataset::slice(Eigen::Index begin, Eigen::Index end) const {
  if (begin < 0 || end < begin || end > size()) throw ShapeError("dataset slice out of range");
  return OfflineDataset{source, states.middleRows(begin, end - begin), actions.middleRows(begin, end - begin),
                        next_states.middleRows(begin, end - begin)};
}

BehaviorPolicy uniform_behavior() {
  return [](const std::vector<double>&, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> a(envs::kActionDim);
    for (auto& v : a) v = u(rng);
    return a;
  };
}

OfflineDataset generate_dataset(const envs::EnvModel& model, Eigen::Index n, std::uint64_t seed,
                                const BehaviorPolicy& behavior) {
  if (n < 0) throw ConfigError("dataset size must be >= 0");
  const auto domain = model.domain();
  const auto sd = static_cast<Eigen::Index>(envs::state_dim(domain));
  const auto ad = static_cast<Eigen::Index>(envs::kActionDim);
  OfflineDataset data{model.params(), nn::Matrix(n, sd), nn::Matrix(n, ad), nn::Matrix(n, sd)};
  std::seed_seq seq{seed, std::uint64_t{0xda7a}};
  std::vector<std::uint64_t> seeds(2);
  seq.generate(seeds.begin(), seeds.end());
  std::mt19937_64 reset_rng(seeds[0]), act_rng(seeds[1]);

  envs::EnvModel env = model;
  env.reset(reset_rng);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (env.episode_done()) env.reset(reset_rng);
    const auto s = envs::state_vector(domain, env.get_state());
    auto a = behavior(env.observation(), act_rng);
    if (a.size() != envs::kActionDim) throw ShapeError("behavior policy returned the wrong action size");
    for (auto& v : a) v = std::clamp(v, -1.0, 1.0);
    env.step(a);
    const auto s2 = envs::state_vector(domain, env.get_state());
    for (Eigen::Index c = 0; c < sd; ++c) {
      data.states(r, c) = s[static_cast<std::size_t>(c)];
      data.next_states(r, c) = s2[static_cast<std::size_t>(c)];
    }
    for (Eigen::Index c = 0; c < ad; ++c) data.actions(r, c) = a[static_cast<std::size_t>(c)];
  }
  return data;
}

void save_dataset(const std::string& stem, const OfflineDataset& data) {
  const std::string blob = stem + ".bin";
  json manifest{{"format", "robust-ctrl-dataset-1"},
                {"source", params_to_json(data.source)},
                {"size", data.size()},
                {"state_dim", data.states.cols()},
                {"action_dim", data.actions.cols()},
                {"record_layout", {"state", "action", "next_state"}},
                {"blob", blob.substr(blob.find_last_of('/') + 1)}};
  std::ofstream m(stem + ".json");
  if (!m) throw Error("cannot write dataset manifest " + stem + ".json");
  m << manifest.dump(2) << '\n';
  std::ofstream b(blob, std::ios::binary);
  if (!b) throw Error("cannot write dataset blob " + blob);
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    for (Eigen::Index c = 0; c < data.states.cols(); ++c) write_f64(b, data.states(r, c));
    for (Eigen::Index c = 0; c < data.actions.cols(); ++c) write_f64(b, data.actions(r, c));
    for (Eigen::Index c = 0; c < data.next_states.cols(); ++c) write_f64(b, data.next_states(r, c));
  }
  if (!b) throw Error("failed writing dataset blob " + blob);
}

OfflineDataset load_dataset(const std::string& stem) {
  std::ifstream m(stem + ".json");
  if (!m) throw ConfigError("cannot open dataset manifest " + stem + ".json");
  json manifest;
  try {
    manifest = json::parse(m);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset manifest: ") + e.what());
  }
  OfflineDataset data;
  Eigen::Index n = 0, sd = 0, ad = 0;
  try {
    if (manifest.at("format").get<std::string>() != "robust-ctrl-dataset-1") throw ConfigError("unknown dataset format");
    data.source = params_from_json(manifest.at("source"));
    n = manifest.at("size").get<Eigen::Index>();
    sd = manifest.at("state_dim").get<Eigen::Index>();
    ad = manifest.at("action_dim").get<Eigen::Index>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset manifest: ") + e.what());
  }
  if (n < 0 || sd != static_cast<Eigen::Index>(envs::state_dim(data.source.domain)) ||
      ad != static_cast<Eigen::Index>(envs::kActionDim)) {
    throw ConfigError("dataset manifest dimensions disagree with the domain");
  }
  std::ifstream b(stem + ".bin", std::ios::binary);
  if (!b) throw ConfigError("cannot open dataset blob " + stem + ".bin");
  data.states.resize(n, sd);
  data.actions.resize(n, ad);
  data.next_states.resize(n, sd);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < sd; ++c) data.states(r, c) = read_f64(b);
    for (Eigen::Index c = 0; c < ad; ++c) data.actions(r, c) = read_f64(b);
    for (Eigen::Index c = 0; c < sd; ++c) data.next_states(r, c) = read_f64(b);
  }
  if (b.peek() != std::char_traits<char>::eof()) throw ConfigError("dataset blob has trailing bytes");
  return data;
}

LearnedModel::LearnedModel(envs::EnvParams params, FitConfig config)
    : params_(params), config_(std::move(config)) {
  params_.validate();
  const auto sd = static_cast<Eigen::Index>(envs::state_dim(params_.domain));
  const Eigen::Index in = sd + (config_.encode_angles ? 1 : 0) + static_cast<Eigen::Index>(envs::kActionDim);
  net_ = nn::Mlp(nn::MlpSpec{in, config_.hidden, sd, true, 0.1});
  linear_.add("weight", in, sd);
  linear_.add("bias", 1, sd);
  in_mean_ = nn::Vector::Zero(in);
  in_std_ = nn::Vector::Ones(in);
  out_mean_ = nn::Vector::Zero(sd);
  out_std_ = nn::Vector::Ones(sd);
}

nn::Matrix LearnedModel::features(const nn::Matrix& states, const nn::Matrix& actions) const {
  const Eigen::Index n = states.rows(), sd = states.cols();
  const Eigen::Index in = in_mean_.size();
  nn::Matrix x(n, in);
  const int a = angle_index(params_.domain);
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::Index c = 0;
    for (Eigen::Index k = 0; k < sd; ++k) {
      if (config_.encode_angles && k == a) {
        x(r, c++) = std::cos(states(r, k));
        x(r, c++) = std::sin(states(r, k));
      } else {
        x(r, c++) = states(r, k);
      }
    }
    for (Eigen::Index k = 0; k < actions.cols(); ++k) x(r, c++) = actions(r, k);
  }
  return ((x.rowwise() - in_mean_.transpose()).array().rowwise() / in_std_.transpose().array()).matrix();
}

nn::Matrix LearnedModel::predict(const nn::Matrix& states, const nn::Matrix& actions) const {
  if (states.rows() != actions.rows()) throw ShapeError("learned model: batch sizes differ");
  const nn::Matrix x = features(states, actions);
  nn::Matrix z = net_.forward(x) + x * linear_.block(0);
  z.rowwise() += linear_.block(1).row(0);
  nn::Matrix delta = (z.array().rowwise() * out_std_.transpose().array()).matrix();
  delta.rowwise() += out_mean_.transpose();
  nn::Matrix next = states + delta;
  const int a = angle_index(params_.domain);
  for (Eigen::Index r = 0; r < next.rows(); ++r) next(r, a) = envs::wrap_angle(next(r, a));
  return next;
}

envs::StepResult LearnedModel::step(std::span<const double> action) {
  if (action.size() != envs::kActionDim) throw ShapeError("expected a one-dimensional action");
  if (std::isnan(action[0])) throw PhysicsError("NaN action");
  const auto s = envs::state_vector(params_.domain, state_);
  nn::Matrix sm(1, static_cast<Eigen::Index>(s.size())), am(1, 1);
  for (std::size_t c = 0; c < s.size(); ++c) sm(0, static_cast<Eigen::Index>(c)) = s[c];
  am(0, 0) = std::clamp(action[0], -1.0, 1.0);
  const nn::Matrix next = predict(sm, am);
  if (!next.allFinite()) throw PhysicsError("learned model predicted a non-finite state");
  state_ = envs::state_from_vector(params_.domain, std::span<const double>(next.data(), static_cast<std::size_t>(next.size())),
                                   state_.step_count + 1);
  return envs::StepResult{state_, envs::reward(params_.domain, state_)};
}

std::unique_ptr<envs::DynamicsModel> LearnedModel::clone() const { return std::make_unique<LearnedModel>(*this); }

void LearnedModel::save(const std::string& path) const {
  nn::Checkpoint ck;
  json meta{{"kind", "learned_model"},
            {"params", params_to_json(params_)},
            {"hidden", config_.hidden},
            {"encode_angles", config_.encode_angles}};
  ck.metadata_json = meta.dump();
  ck.arrays = {{"net", net_.params().values()}, {"linear", linear_.values()}, {"in_mean", in_mean_},
               {"in_std", in_std_},             {"out_mean", out_mean_},      {"out_std", out_std_}};
  nn::save_checkpoint(path, ck);
}

LearnedModel LearnedModel::load(const std::string& path) {
  const auto ck = nn::load_checkpoint(path);
  json meta;
  FitConfig cfg;
  envs::EnvParams params;
  try {
    meta = json::parse(ck.metadata_json);
    if (meta.at("kind").get<std::string>() != "learned_model") throw ConfigError("checkpoint is not a learned model");
    params = params_from_json(meta.at("params"));
    cfg.hidden = meta.at("hidden").get<std::vector<Eigen::Index>>();
    cfg.encode_angles = meta.at("encode_angles").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("learned model metadata: ") + e.what());
  }
  LearnedModel m(params, cfg);
  auto take = [&](const char* name, nn::Vector& dst) {
    const auto& v = ck.array(name);
    if (v.size() != dst.size()) throw ConfigError(std::string("learned model array size mismatch: ") + name);
    dst = v;
  };
  take("net", m.net_.params().values());
  take("linear", m.linear_.values());
  take("in_mean", m.in_mean_);
  take("in_std", m.in_std_);
  take("out_mean", m.out_mean_);
  take("out_std", m.out_std_);
  return m;
}

struct FitAccess {
  static FitResult fit(const OfflineDataset& data, const FitConfig& config) {
    const Eigen::Index n = data.size();
    if (n < 10) throw ConfigError("fit_model: need at least 10 transitions");
    if (!data.states.allFinite() || !data.actions.allFinite() || !data.next_states.allFinite()) {
      throw ConfigError("fit_model: dataset contains non-finite values");
    }
    const nn::Vector smean = column_mean(data.states);
    const nn::Vector spread = ((data.states.rowwise() - smean.transpose()).array().square().colwise().mean()).sqrt();
    if (!(spread.maxCoeff() > 1e-9)) throw ConfigError("fit_model: degenerate dataset (states do not vary)");
    if (!(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) || config.batch_size == 0 ||
        config.epochs < 0 || config.max_steps < 0) {
      throw ConfigError("fit_model: invalid fit configuration");
    }

    std::mt19937_64 rng(config.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const Eigen::Index n_hold = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(config.holdout_fraction * static_cast<double>(n))));
    const Eigen::Index n_train = n - n_hold;
    auto gather = [&](Eigen::Index begin, Eigen::Index count) {
      OfflineDataset d{data.source, nn::Matrix(count, data.states.cols()), nn::Matrix(count, data.actions.cols()),
                       nn::Matrix(count, data.next_states.cols())};
      for (Eigen::Index r = 0; r < count; ++r) {
        const Eigen::Index src = order[static_cast<std::size_t>(begin + r)];
        d.states.row(r) = data.states.row(src);
        d.actions.row(r) = data.actions.row(src);
        d.next_states.row(r) = data.next_states.row(src);
      }
      return d;
    };
    const OfflineDataset train = gather(0, n_train);
    const OfflineDataset hold = gather(n_train, n_hold);

    LearnedModel model(data.source, config);
    model.net_.init(rng);
    // Normalization statistics from the training split.
    model.in_mean_.setZero();
    model.in_std_.setOnes();
    const nn::Matrix raw_x = model.features(train.states, train.actions);
    model.in_mean_ = column_mean(raw_x);
    model.in_std_ = column_std(raw_x, model.in_mean_);
    const nn::Matrix d = raw_deltas(data.source.domain, train.states, train.next_states);
    model.out_mean_ = column_mean(d);
    model.out_std_ = column_std(d, model.out_mean_);

    const nn::Matrix x_all = model.features(train.states, train.actions);
    const nn::Matrix y_all = ((d.rowwise() - model.out_mean_.transpose()).array().rowwise() /
                              model.out_std_.transpose().array())
                                 .matrix();
    nn::Adam net_opt(nn::AdamConfig{config.learning_rate}), lin_opt(nn::AdamConfig{config.learning_rate});
    const auto batch = static_cast<Eigen::Index>(std::min<std::size_t>(config.batch_size, static_cast<std::size_t>(n_train)));
    const Eigen::Index per_epoch = (n_train + batch - 1) / batch;
    const long long steps = std::min<long long>(static_cast<long long>(config.epochs) * per_epoch, config.max_steps);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n_train));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    nn::Matrix xb(batch, x_all.cols()), yb(batch, y_all.cols());
    Eigen::Index cursor = n_train;
    for (long long step = 0; step < steps; ++step) {
      for (Eigen::Index r = 0; r < batch; ++r) {
        if (cursor >= n_train) {
          std::shuffle(perm.begin(), perm.end(), rng);
          cursor = 0;
        }
        const Eigen::Index src = perm[static_cast<std::size_t>(cursor++)];
        xb.row(r) = x_all.row(src);
        yb.row(r) = y_all.row(src);
      }
      nn::Tape tape;
      auto nb = nn::bind(tape, model.net_.params());
      auto lb = nn::bind(tape, model.linear_);
      nn::Var x = tape.constant(xb);
      nn::Var z = nn::add_row(model.net_.forward(x, nb) + nn::matmul(x, lb.vars[0]), lb.vars[1]);
      nn::Var loss = nn::mean(nn::square(z - tape.constant(yb)));
      if (!std::isfinite(loss.value()(0, 0))) throw TrainingError("fit_model: non-finite loss");
      tape.backward(loss);
      net_opt.step(model.net_.params().values(), nn::gather_grad(nb, model.net_.params()));
      lin_opt.step(model.linear_.values(), nn::gather_grad(lb, model.linear_));
    }
    FitResult res{model, one_step_mse(model, train), one_step_mse(model, hold)};
    return res;
  }
};

FitResult fit_model(const OfflineDataset& data, const FitConfig& config) { return FitAccess::fit(data, config); }

double one_step_mse(const LearnedModel& model, const OfflineDataset& data) {
  if (data.size() == 0) throw ShapeError("one_step_mse: empty dataset");
  const nn::Matrix pred = model.predict(data.states, data.actions);
  const nn::Matrix err = raw_deltas(model.domain(), data.next_states, pred);
  return err.array().square().mean();
}

std::vector<std::shared_ptr<const envs::DynamicsModel>> ddr_uncertainty_set(const std::vector<LearnedModel>& models) {
  if (models.empty()) throw ConfigError("ddr uncertainty set needs at least one model");
  std::vector<std::shared_ptr<const envs::DynamicsModel>> out;
  for (const auto& m : models) out.push_back(std::make_shared<LearnedModel>(m));
  return out;
}

}  // namespace robust_ctrl::ddr
