#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "knnseq/dataset.hpp"
#include "knnseq/rng.hpp"

namespace knnseq {

inline constexpr std::size_t no_index = std::numeric_limits<std::size_t>::max();

struct Neighbor {
  std::size_t index;
  double distance;
};

// How the out-of-core sampler picks each round's batch. `with_replacement`
// is the production regime (re-selection across rounds is allowed);
// `exhaustive` loads the whole set when the batch capacity covers it and
// exists to make the degenerate case comparable with the exact scan.
enum class SampleMode { with_replacement, exhaustive };

struct OocConfig {
  std::size_t batch = 64;   // B, maximum samples held in memory at once
  std::size_t rounds = 50;  // R
  std::uint64_t seed = 0;
  SampleMode mode = SampleMode::with_replacement;
};

// Reference set for Euclidean nearest-neighbor queries over z-scored
// features. Distances are computed through one shared kernel
// (|a|^2 + |b|^2 - 2 a.b, clamped at zero) so that every query path --
// exact scan, out-of-core batches, classifier voting -- produces
// bit-identical values for the same pair of points.
class NeighborIndex {
 public:
  NeighborIndex(std::vector<double> normalized_features, std::vector<int> labels, std::size_t n,
                std::size_t d);
  static NeighborIndex build(const Dataset& ds, const NormStats& stats);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  const double* row(std::size_t i) const { return features_.data() + i * d_; }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const { return labels_; }

  static double squared_norm(const double* v, std::size_t d);
  double distance_to_row(const double* query, double query_sqnorm, std::size_t j) const;

  // K nearest rows to `query`, ascending distance, ties by smaller index,
  // optionally excluding one row. Throws when fewer than k candidates exist.
  std::vector<Neighbor> query(const double* query, std::size_t k,
                              std::size_t exclude = no_index) const;

  // Same contract restricted to `candidates` (duplicates collapse).
  std::vector<Neighbor> query_subset(const double* query, std::size_t k,
                                     std::vector<std::size_t> candidates,
                                     std::size_t exclude = no_index) const;

 private:
  std::vector<double> features_;
  std::vector<double> sqnorms_;
  std::vector<int> labels_;
  std::size_t n_ = 0;
  std::size_t d_ = 0;
};

// Ordered K-nearest-neighbor targets for every sample: labels, feature
// vectors (in normalized space) and ascending distances.
struct NeighborTargets {
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<int> labels;        // n x k
  std::vector<double> vectors;    // n x k x d
  std::vector<double> distances;  // n x k

  const int* labels_of(std::size_t i) const { return labels.data() + i * k; }
  const double* vector_of(std::size_t i, std::size_t t) const {
    return vectors.data() + (i * k + t) * d;
  }
  const double* distances_of(std::size_t i) const { return distances.data() + i * k; }
};

// K smallest of the union, ascending (distance, index); entries with the
// same source index collapse to one.
std::vector<Neighbor> merge_top_k(std::vector<Neighbor> current,
                                  const std::vector<Neighbor>& extra, std::size_t k);

std::vector<Neighbor> exact_neighbor_list(const NeighborIndex& index, std::size_t k,
                                          std::size_t sample);

// R rounds of drawing B candidates, taking the K nearest within the round
// and folding them into the running top-K.
std::vector<Neighbor> ooc_query(const NeighborIndex& index, const double* query, std::size_t k,
                                const OocConfig& cfg, RngStream& draw,
                                std::size_t exclude = no_index);

// Out-of-core neighbors of a training sample (self excluded). `salt`
// separates per-epoch refreshes without touching the configured seed.
std::vector<Neighbor> ooc_neighbor_list(const NeighborIndex& index, std::size_t k,
                                        const OocConfig& cfg, std::size_t sample,
                                        std::uint64_t salt = 0);

NeighborTargets targets_from_lists(const NeighborIndex& index,
                                   const std::vector<std::vector<Neighbor>>& lists);

NeighborTargets exact_targets(const NeighborIndex& index, std::size_t k, int workers = 0);

NeighborTargets ooc_targets(const NeighborIndex& index, std::size_t k, const OocConfig& cfg,
                            int workers = 0, std::uint64_t salt = 0);

}  // namespace knnseq
