#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "knnseq/checkpoint.hpp"
#include "knnseq/dataset.hpp"
#include "knnseq/knn.hpp"
#include "knnseq/model.hpp"
#include "knnseq/seq2seq.hpp"
#include "knnseq/targets_io.hpp"

namespace knnseq {

enum class TrainMode { full, ooc };

struct TrainConfig {
  ModelKind kind = ModelKind::v2vsls;
  int epochs = 30;
  int minibatch = 32;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout = 0.2;
  std::uint64_t seed = 0;
  double tau = 0.85;
  double alpha = 9.5;
  double lambda = 0.12;
  std::size_t k = 5;
  TrainMode mode = TrainMode::full;
  OocConfig ooc{};            // B=64, R=50 defaults; used when mode == ooc
  std::size_t hidden = 128;   // seq2seq LSTM width
  std::size_t memory_slots = 64;
  std::size_t embed_dim = 64;
  FeedMode feed = FeedMode::predicted;
  double val_fraction = 0.1;  // held out for early stopping
  int patience = 5;           // epochs without val improvement before stopping
  int threads = 0;
  bool verbose = false;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_losses;
  double prep_seconds = 0.0;   // time spent producing neighbor targets
  double train_seconds = 0.0;  // gradient work
  int epochs_run = 0;
};

// Minibatch Adam over precomputed targets. Targets must align with the
// dataset (same N, d and label map).
TrainResult train(const Dataset& train_data, const TargetsFile& targets, const TrainConfig& cfg);

// Out-of-core regime: every epoch, each sample's targets are refreshed with
// R rounds of B-sample batches before its gradient contribution.
TrainResult train_ooc(const Dataset& train_data, const TrainConfig& cfg);

struct Metrics {
  double macro_f1 = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::vector<long long>> confusion;  // [true][predicted]
  std::size_t num_samples = 0;
  double prep_seconds = 0.0;
  double train_seconds = 0.0;
};

double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                std::size_t num_classes);
Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                        std::size_t num_classes);

struct EvalOptions {
  std::uint64_t seed = 0;  // run seed for evaluation-time memory draws
  int memory_draws = 1;    // memnet: predictions averaged over this many draws
  int threads = 0;
};

// Rebuilds a model from a checkpoint for repeated label queries.
// `train_reference` is required for v2vs (vector voting) and the memory
// kinds (memory is drawn from the training set); it may be null otherwise.
class Predictor {
 public:
  Predictor(const Checkpoint& ckpt, const Dataset* train_reference, const EvalOptions& opts = {});
  ~Predictor();
  Predictor(Predictor&&) noexcept;

  ModelKind kind() const;
  std::size_t num_classes() const;
  std::size_t dim() const;

  // Predicted class for one raw (unnormalized) feature vector. `query_tag`
  // keys the evaluation-time memory draws so parallel evaluation stays
  // deterministic.
  int predict(const double* raw_features, std::uint64_t query_tag = 0) const;
  std::vector<int> predict_batch(const Dataset& data) const;

  // Final label distribution and per-step outputs for one query.
  PredictionBundle predict_bundle(const double* raw_features, std::uint64_t query_tag = 0) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

int predict_label(const Checkpoint& ckpt, const std::vector<double>& raw_features,
                  const Dataset* train_reference, const EvalOptions& opts = {},
                  std::uint64_t query_tag = 0);

Metrics evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& test,
                            const Dataset* train_reference, const EvalOptions& opts = {});

enum class KnnMode { full, ooc };

// Plain kNN baseline: majority vote over the exact K nearest (full) or over
// the Algorithm-style approximate neighbor list per query (ooc). Vote ties
// break toward the class with the smallest summed distance, then the lower
// class id.
Metrics baseline_knn_classify(const Dataset& train, const Dataset& test, std::size_t k,
                              KnnMode mode, const OocConfig& ooc = {}, int threads = 0);

int vote_among_neighbors(const std::vector<Neighbor>& neighbors, const std::vector<int>& labels,
                         std::size_t num_classes);

// Swaps rank i and rank j (1-based) in every sample's labels, vectors and
// distances.
NeighborTargets swap_targets_ablation(NeighborTargets targets, std::size_t rank_i,
                                      std::size_t rank_j);

std::string metrics_report(const Metrics& metrics, const std::vector<std::int64_t>& label_map);
// Deterministic machine-readable metrics (timing excluded; see the
// sibling timing file written by the CLI).
std::string metrics_json(const Metrics& metrics, const std::vector<std::int64_t>& label_map);

}  // namespace knnseq
