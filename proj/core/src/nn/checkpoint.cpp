#include "robust_ctrl/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "robust_ctrl/errors.hpp"

namespace robust_ctrl::nn {
namespace {

constexpr char kMagic[] = "RCKPT1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

}  // namespace

const Vector& Checkpoint::array(const std::string& name) const {
  for (const auto& [n, v] : arrays) {
    if (n == name) return v;
  }
  throw ConfigError("checkpoint has no array '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  nlohmann::json header;
  header["metadata"] = nlohmann::json::parse(checkpoint.metadata_json);
  header["arrays"] = nlohmann::json::array();
  for (const auto& [name, v] : checkpoint.arrays) {
    header["arrays"].push_back({{"name", name}, {"size", v.size()}});
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out.write(kMagic, kMagicLen);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, v] : checkpoint.arrays) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw ConfigError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) throw ConfigError("not a checkpoint: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || len > (1u << 26)) throw ConfigError("corrupt checkpoint header: " + path);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ConfigError("truncated checkpoint header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corrupt checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  ck.metadata_json = header.at("metadata").dump();
  for (const auto& a : header.at("arrays")) {
    Vector v(a.at("size").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw ConfigError("truncated checkpoint data: " + path);
    ck.arrays.emplace_back(a.at("name").get<std::string>(), std::move(v));
  }
  return ck;
}

}  // namespace robust_ctrl::nn
