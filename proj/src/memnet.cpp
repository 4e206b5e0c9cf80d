#include "knnseq/memnet.hpp"

#include <cmath>
#include <stdexcept>

namespace knnseq {

using diff::Tensor;

namespace {

Tensor init_embed(std::size_t rows, std::size_t cols, std::uint64_t seed,
                  const std::string& name) {
  RngStream rng = RngStream::derive(seed, "init:" + name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  return diff::uniform_init({rows, cols}, bound, rng);
}

}  // namespace

MemNetModel::MemNetModel(ModelKind kind, const MemNetConfig& cfg, std::uint64_t seed)
    : kind_(kind), cfg_(cfg) {
  if (!kind_is_memnet(kind)) {
    throw std::invalid_argument("MemNetModel: " + to_string(kind) + " is not a memory-network kind");
  }
  if (cfg.d == 0 || cfg.classes < 2 || cfg.k < 1 || cfg.slots < 1 || cfg.embed < 1) {
    throw std::invalid_argument("MemNetModel: invalid config (d=" + std::to_string(cfg.d) +
                                ", C=" + std::to_string(cfg.classes) + ", K=" +
                                std::to_string(cfg.k) + ", n=" + std::to_string(cfg.slots) +
                                ", e=" + std::to_string(cfg.embed) + ")");
  }
  if (cfg.tau <= 0.0) {
    throw std::invalid_argument("MemNetModel: tau must be positive");
  }

  input_embed_ = init_embed(cfg.d, cfg.embed, seed, "input_embed");
  output_embed_ = init_embed(cfg.d, cfg.embed, seed, "output_embed");
  query_embed_ = init_embed(cfg.d, cfg.embed, seed, "query_embed");
  hop_map_ = init_embed(cfg.embed, cfg.embed, seed, "hop_map");
  label_w_ = init_embed(cfg.embed, cfg.classes, seed, "label_head.w");
  label_b_ = Tensor::zeros({cfg.classes}, true);
  if (kind_has_vector_head(kind_)) {
    vec_t_ = init_embed(cfg.embed, cfg.embed, seed, "vector_head.t");
    vec_w_ = init_embed(cfg.embed, cfg.d, seed, "vector_head.w");
    vec_b_ = Tensor::zeros({cfg.d}, true);
  }
}

MemNetModel::EmbeddedMemory MemNetModel::embed_memory(const Tensor& memory) const {
  if (memory.cols() != cfg_.d) {
    throw std::invalid_argument("embed_memory: memory " + diff::shape_str(memory.shape()) +
                                " does not match feature dimension " + std::to_string(cfg_.d));
  }
  return {diff::matmul(memory, input_embed_), diff::matmul(memory, output_embed_)};
}

diff::Tensor MemNetModel::embed_query(const Tensor& x) const {
  if (x.cols() != cfg_.d) {
    throw std::invalid_argument("embed_query: query " + diff::shape_str(x.shape()) +
                                " does not match feature dimension " + std::to_string(cfg_.d));
  }
  return diff::matmul(x, query_embed_);
}

MemNetModel::HopOut MemNetModel::hop(const Tensor& u, const EmbeddedMemory& mem) const {
  // Attention over slots has no temperature; tau applies to label heads only.
  Tensor scores = diff::matmul_nt(u, mem.keys);
  Tensor attention = diff::softmax_with_temperature(scores, 1.0);
  Tensor read = diff::matmul(attention, mem.values);
  Tensor state = diff::add(diff::matmul(u, hop_map_), read);
  return {state, read, attention};
}

diff::Tensor MemNetModel::label_head(const Tensor& state) const {
  return diff::softmax_with_temperature(diff::affine(state, label_w_, label_b_), cfg_.tau);
}

diff::Tensor MemNetModel::vector_head(const Tensor& state) const {
  if (!kind_has_vector_head(kind_)) {
    throw std::logic_error("vector_head: " + to_string(kind_) + " has no vector head");
  }
  Tensor hidden = diff::activation(diff::matmul(state, vec_t_), diff::Activation::relu);
  return diff::affine(hidden, vec_w_, vec_b_);
}

MemNetModel::ForwardOut MemNetModel::forward(const Tensor& query, const Tensor& memory,
                                             diff::Mode mode, RngStream* dropout_rng) const {
  if (memory.rows() < 1) {
    throw std::invalid_argument("forward: memory is empty");
  }
  RngStream unused_rng;
  RngStream& rng = dropout_rng ? *dropout_rng : unused_rng;
  const diff::Mode dropout_mode = dropout_rng ? mode : diff::Mode::eval;

  EmbeddedMemory mem = embed_memory(memory);
  Tensor u = embed_query(query);

  ForwardOut out;
  for (std::size_t t = 0; t < cfg_.k; ++t) {
    HopOut h = hop(u, mem);
    out.attentions.push_back(h.attention);
    Tensor head_in = diff::dropout(h.state, cfg_.dropout_rate, dropout_mode, rng);
    out.bundle.step_labels.push_back(label_head(head_in));
    if (kind_has_vector_head(kind_)) {
      out.bundle.step_vectors.push_back(vector_head(head_in));
    }
    u = h.state;
  }
  out.bundle.final_label = diff::mean_of(out.bundle.step_labels);
  return out;
}

std::vector<std::pair<std::string, Tensor>> MemNetModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("input_embed", input_embed_);
  params.emplace_back("output_embed", output_embed_);
  params.emplace_back("query_embed", query_embed_);
  params.emplace_back("hop_map", hop_map_);
  params.emplace_back("label_head.w", label_w_);
  params.emplace_back("label_head.b", label_b_);
  if (kind_has_vector_head(kind_)) {
    params.emplace_back("vector_head.t", vec_t_);
    params.emplace_back("vector_head.w", vec_w_);
    params.emplace_back("vector_head.b", vec_b_);
  }
  return params;
}

std::vector<std::size_t> draw_memory_slots(std::size_t train_size, std::size_t slots,
                                           RngStream& rng, std::size_t exclude) {
  return rng.sample_without_replacement(train_size, slots, exclude);
}

diff::Tensor gather_memory(const std::vector<double>& normalized_features, std::size_t d,
                           const std::vector<std::size_t>& slot_indices) {
  std::vector<double> out(slot_indices.size() * d);
  for (std::size_t r = 0; r < slot_indices.size(); ++r) {
    const double* src = normalized_features.data() + slot_indices[r] * d;
    std::copy(src, src + d, out.begin() + r * d);
  }
  return Tensor({slot_indices.size(), d}, std::move(out));
}

diff::Tensor loss_mnknn(const PredictionBundle& bundle, const BatchTargets& targets, double alpha) {
  return label_sequence_loss(bundle, targets, alpha);
}

diff::Tensor loss_mnknn_vec(const PredictionBundle& bundle, const BatchTargets& targets,
                            double alpha, double lambda) {
  Tensor l1 = label_sequence_loss(bundle, targets, alpha);
  if (lambda == 0.0) {
    return l1;
  }
  return diff::add(l1, diff::scale(vector_sequence_loss(bundle, targets), lambda));
}

}  // namespace knnseq
