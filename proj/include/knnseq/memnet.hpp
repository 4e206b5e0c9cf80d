#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "knnseq/model.hpp"
#include "knnseq/ops.hpp"
#include "knnseq/rng.hpp"
#include "knnseq/tensor.hpp"

namespace knnseq {

struct MemNetConfig {
  std::size_t d = 0;        // feature dimension
  std::size_t classes = 0;  // C
  std::size_t k = 5;        // hops = neighbor count
  std::size_t slots = 64;   // external memory size n
  std::size_t embed = 64;   // embedding dimension e
  double tau = 0.85;
  double alpha = 9.5;
  double lambda = 0.12;
  double dropout_rate = 0.2;
};

// K attention hops over an external memory of training samples. The input
// and output embeddings are shared across hops by construction: the model
// owns exactly one A and one C matrix.
class MemNetModel {
 public:
  MemNetModel(ModelKind kind, const MemNetConfig& cfg, std::uint64_t seed);

  ModelKind kind() const { return kind_; }
  const MemNetConfig& config() const { return cfg_; }

  struct EmbeddedMemory {
    diff::Tensor keys;    // n x e, A x_i
    diff::Tensor values;  // n x e, C x_i
  };

  EmbeddedMemory embed_memory(const diff::Tensor& memory) const;

  struct HopOut {
    diff::Tensor state;      // u^{t+1} = H u^t + o^t
    diff::Tensor read;       // o^t
    diff::Tensor attention;  // p^t, a distribution over the n slots
  };

  HopOut hop(const diff::Tensor& u, const EmbeddedMemory& mem) const;

  diff::Tensor embed_query(const diff::Tensor& x) const;  // u^1 = B x
  diff::Tensor label_head(const diff::Tensor& state) const;
  diff::Tensor vector_head(const diff::Tensor& state) const;

  // K hops over `memory` (n x d normalized feature rows) for a single query
  // (1 x d). Per-hop attentions are exposed for inspection.
  struct ForwardOut {
    PredictionBundle bundle;
    std::vector<diff::Tensor> attentions;
  };

  ForwardOut forward(const diff::Tensor& query, const diff::Tensor& memory, diff::Mode mode,
                     RngStream* dropout_rng = nullptr) const;

  std::vector<std::pair<std::string, diff::Tensor>> named_parameters() const;

 private:
  ModelKind kind_;
  MemNetConfig cfg_;
  diff::Tensor input_embed_;   // A, d x e
  diff::Tensor output_embed_;  // C, d x e
  diff::Tensor query_embed_;   // B, d x e
  diff::Tensor hop_map_;       // H, e x e
  diff::Tensor label_w_, label_b_;
  diff::Tensor vec_t_, vec_w_, vec_b_;
};

// Memory slots for one query: drawn from the training set without
// replacement, excluding the query itself when it is a training sample.
std::vector<std::size_t> draw_memory_slots(std::size_t train_size, std::size_t slots,
                                           RngStream& rng, std::size_t exclude = no_index);

diff::Tensor gather_memory(const std::vector<double>& normalized_features, std::size_t d,
                           const std::vector<std::size_t>& slot_indices);

diff::Tensor loss_mnknn(const PredictionBundle& bundle, const BatchTargets& targets, double alpha);
diff::Tensor loss_mnknn_vec(const PredictionBundle& bundle, const BatchTargets& targets,
                            double alpha, double lambda);

}  // namespace knnseq
