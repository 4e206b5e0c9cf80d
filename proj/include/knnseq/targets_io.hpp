#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "knnseq/dataset.hpp"
#include "knnseq/knn.hpp"

namespace knnseq {

// On-disk neighbor targets: magic "KNNT1", header (K, d, N, C), the label
// remap and normalization statistics, then per-sample records in sample
// order (K labels, K d-vectors, K distances). All numbers 64-bit
// little-endian; the byte length follows from the header alone.
struct TargetsFile {
  NeighborTargets targets;
  NormStats stats;
  std::vector<std::int64_t> label_map;
};

void write_targets(const TargetsFile& tf, const std::string& path);
TargetsFile read_targets(const std::string& path);

}  // namespace knnseq
