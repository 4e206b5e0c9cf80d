#include "knnseq/knn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "knnseq/util.hpp"

namespace knnseq {

namespace {

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.index < b.index;
}

// Sorted-array top-k accumulator; cheap for the small k used here.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { items_.reserve(k + 1); }

  void offer(std::size_t index, double distance) {
    const Neighbor cand{index, distance};
    if (items_.size() == k_ && !neighbor_less(cand, items_.back())) {
      return;
    }
    auto pos = std::upper_bound(items_.begin(), items_.end(), cand, neighbor_less);
    items_.insert(pos, cand);
    if (items_.size() > k_) {
      items_.pop_back();
    }
  }

  std::vector<Neighbor> take() { return std::move(items_); }

 private:
  std::size_t k_;
  std::vector<Neighbor> items_;
};

}  // namespace

NeighborIndex::NeighborIndex(std::vector<double> normalized_features, std::vector<int> labels,
                             std::size_t n, std::size_t d)
    : features_(std::move(normalized_features)), labels_(std::move(labels)), n_(n), d_(d) {
  if (features_.size() != n_ * d_) {
    throw std::invalid_argument("NeighborIndex: feature buffer does not match n*d");
  }
  if (labels_.size() != n_) {
    throw std::invalid_argument("NeighborIndex: label count does not match n");
  }
  sqnorms_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    sqnorms_[i] = squared_norm(row(i), d_);
  }
}

NeighborIndex NeighborIndex::build(const Dataset& ds, const NormStats& stats) {
  return NeighborIndex(normalize_matrix(stats, ds), ds.labels, ds.n, ds.d);
}

double NeighborIndex::squared_norm(const double* v, std::size_t d) {
  double acc = 0.0;
  for (std::size_t j = 0; j < d; ++j) acc += v[j] * v[j];
  return acc;
}

double NeighborIndex::distance_to_row(const double* query, double query_sqnorm,
                                      std::size_t j) const {
  const double* r = row(j);
  double dot = 0.0;
  for (std::size_t t = 0; t < d_; ++t) dot += query[t] * r[t];
  const double sq = query_sqnorm + sqnorms_[j] - 2.0 * dot;
  return std::sqrt(sq > 0.0 ? sq : 0.0);
}

std::vector<Neighbor> NeighborIndex::query(const double* query, std::size_t k,
                                           std::size_t exclude) const {
  const std::size_t available = n_ - (exclude < n_ ? 1 : 0);
  if (k > available) {
    throw std::invalid_argument("query_neighbors: need " + std::to_string(k) +
                                " neighbors but only " + std::to_string(available) +
                                " candidates are available");
  }
  const double qn = squared_norm(query, d_);
  TopK top(k);
  for (std::size_t j = 0; j < n_; ++j) {
    if (j == exclude) continue;
    top.offer(j, distance_to_row(query, qn, j));
  }
  return top.take();
}

std::vector<Neighbor> NeighborIndex::query_subset(const double* query, std::size_t k,
                                                  std::vector<std::size_t> candidates,
                                                  std::size_t exclude) const {
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  const double qn = squared_norm(query, d_);
  TopK top(k);
  for (std::size_t j : candidates) {
    if (j == exclude) continue;
    top.offer(j, distance_to_row(query, qn, j));
  }
  return top.take();
}

std::vector<Neighbor> merge_top_k(std::vector<Neighbor> current,
                                  const std::vector<Neighbor>& extra, std::size_t k) {
  current.insert(current.end(), extra.begin(), extra.end());
  std::sort(current.begin(), current.end(), neighbor_less);
  current.erase(std::unique(current.begin(), current.end(),
                            [](const Neighbor& a, const Neighbor& b) { return a.index == b.index; }),
                current.end());
  if (current.size() > k) {
    current.resize(k);
  }
  return current;
}

std::vector<Neighbor> exact_neighbor_list(const NeighborIndex& index, std::size_t k,
                                          std::size_t sample) {
  if (index.size() < k + 1) {
    throw std::invalid_argument("exact_neighbors: need at least " + std::to_string(k + 1) +
                                " samples, have " + std::to_string(index.size()));
  }
  return index.query(index.row(sample), k, sample);
}

std::vector<Neighbor> ooc_query(const NeighborIndex& index, const double* query, std::size_t k,
                                const OocConfig& cfg, RngStream& draw, std::size_t exclude) {
  if (cfg.batch <= k) {
    throw std::invalid_argument("ooc_neighbors: batch capacity B=" + std::to_string(cfg.batch) +
                                " must exceed K=" + std::to_string(k));
  }
  if (cfg.rounds < 1) {
    throw std::invalid_argument("ooc_neighbors: rounds must be at least 1");
  }
  const std::size_t n = index.size();
  if (cfg.mode == SampleMode::exhaustive && cfg.batch < n) {
    throw std::invalid_argument("ooc_neighbors: exhaustive sampling needs B >= dataset size (" +
                                std::to_string(cfg.batch) + " < " + std::to_string(n) + ")");
  }

  std::vector<Neighbor> running;
  std::vector<std::size_t> batch;
  batch.reserve(cfg.batch);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    batch.clear();
    if (cfg.mode == SampleMode::exhaustive) {
      for (std::size_t j = 0; j < n; ++j) batch.push_back(j);
    } else {
      for (std::size_t j = 0; j < cfg.batch; ++j) batch.push_back(draw.next_index(n));
    }
    const std::size_t round_k = std::min(k, batch.size());
    auto round_best = index.query_subset(query, round_k, std::move(batch), exclude);
    batch = {};
    running = merge_top_k(std::move(running), round_best, k);
  }
  return running;
}

std::vector<Neighbor> ooc_neighbor_list(const NeighborIndex& index, std::size_t k,
                                        const OocConfig& cfg, std::size_t sample,
                                        std::uint64_t salt) {
  RngStream draw = RngStream::derive(cfg.seed, "ooc-draw", sample, salt);
  auto running = ooc_query(index, index.row(sample), k, cfg, draw, sample);
  if (running.size() < k) {
    throw std::runtime_error("ooc_neighbors: only " + std::to_string(running.size()) +
                             " distinct candidates seen for sample " + std::to_string(sample) +
                             ", need " + std::to_string(k));
  }
  return running;
}

NeighborTargets targets_from_lists(const NeighborIndex& index,
                                   const std::vector<std::vector<Neighbor>>& lists) {
  NeighborTargets t;
  t.n = lists.size();
  t.k = t.n > 0 ? lists[0].size() : 0;
  t.d = index.dim();
  t.labels.resize(t.n * t.k);
  t.vectors.resize(t.n * t.k * t.d);
  t.distances.resize(t.n * t.k);
  for (std::size_t i = 0; i < t.n; ++i) {
    if (lists[i].size() != t.k) {
      throw std::invalid_argument("targets_from_lists: ragged neighbor lists");
    }
    for (std::size_t j = 0; j < t.k; ++j) {
      const Neighbor& nb = lists[i][j];
      t.labels[i * t.k + j] = index.label(nb.index);
      t.distances[i * t.k + j] = nb.distance;
      const double* src = index.row(nb.index);
      std::copy(src, src + t.d, t.vectors.begin() + (i * t.k + j) * t.d);
    }
  }
  return t;
}

namespace {

NeighborTargets generate_targets(const NeighborIndex& index, std::size_t k, int workers,
                                 const std::function<std::vector<Neighbor>(std::size_t)>& gen) {
  std::vector<std::vector<Neighbor>> lists(index.size());
  parallel_for(index.size(), workers, [&](std::size_t i) { lists[i] = gen(i); });
  return targets_from_lists(index, lists);
}

}  // namespace

NeighborTargets exact_targets(const NeighborIndex& index, std::size_t k, int workers) {
  if (index.size() < k + 1) {
    throw std::invalid_argument("exact_targets: need at least " + std::to_string(k + 1) +
                                " samples, have " + std::to_string(index.size()));
  }
  return generate_targets(index, k, workers,
                          [&](std::size_t i) { return exact_neighbor_list(index, k, i); });
}

NeighborTargets ooc_targets(const NeighborIndex& index, std::size_t k, const OocConfig& cfg,
                            int workers, std::uint64_t salt) {
  return generate_targets(index, k, workers, [&](std::size_t i) {
    return ooc_neighbor_list(index, k, cfg, i, salt);
  });
}

}  // namespace knnseq
