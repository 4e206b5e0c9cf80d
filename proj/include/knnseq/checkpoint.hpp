#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "knnseq/dataset.hpp"
#include "knnseq/tensor.hpp"

namespace knnseq {

// Serialized model: kind tag, hyperparameter record, normalization
// statistics, label remap and the named parameter tensors. Save/load round
// trips are bit-exact ("KNNSEQ1" magic, 64-bit little-endian values).
struct Checkpoint {
  std::string kind;
  std::vector<std::pair<std::string, double>> config;
  NormStats stats;
  std::vector<std::int64_t> label_map;
  std::vector<std::pair<std::string, diff::Tensor>> params;

  bool has_config(const std::string& key) const;
  double config_value(const std::string& key) const;
  void set_config(const std::string& key, double value);
  const diff::Tensor& param(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace knnseq
