#pragma once

// Binary checkpoint: magic line, little-endian u64 header length, JSON header,
// then the named arrays as little-endian doubles in header order.

#include <string>
#include <utility>
#include <vector>

#include "robust_ctrl/nn/tape.hpp"

namespace robust_ctrl::nn {

struct Checkpoint {
  /// Free-form JSON object stored alongside the arrays.
  std::string metadata_json = "{}";
  std::vector<std::pair<std::string, Vector>> arrays;

  const Vector& array(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace robust_ctrl::nn
