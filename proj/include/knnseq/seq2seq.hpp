#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "knnseq/model.hpp"
#include "knnseq/ops.hpp"
#include "knnseq/rng.hpp"
#include "knnseq/tensor.hpp"

namespace knnseq {

enum class FeedMode { predicted, teacher_forced };

struct Seq2SeqConfig {
  std::size_t d = 0;       // feature dimension
  std::size_t classes = 0;  // C
  std::size_t k = 5;       // decoder steps = neighbor count
  std::size_t hidden = 128;
  double tau = 0.85;
  double alpha = 9.5;
  double lambda = 0.12;
  double dropout_rate = 0.2;
  FeedMode feed = FeedMode::predicted;
};

// Encoder-decoder over an input sequence of length one. The encoder runs a
// single LSTM step from the zero state; the decoder starts from the encoder
// final state and consumes [previous feed ; encoder hidden] at every step.
// The decoder output y_t is its hidden state.
class Seq2SeqModel {
 public:
  Seq2SeqModel(ModelKind kind, const Seq2SeqConfig& cfg, std::uint64_t seed);

  ModelKind kind() const { return kind_; }
  const Seq2SeqConfig& config() const { return cfg_; }

  diff::LstmOut encode(const diff::Tensor& x) const;

  struct DecodeState {
    diff::Tensor h;
    diff::Tensor c;
    std::size_t step = 0;
  };

  // One decoder step; y_t is the new hidden state. Throws after K steps.
  std::pair<diff::Tensor, DecodeState> decode_step(const diff::Tensor& prev_feed,
                                                   DecodeState state,
                                                   const diff::Tensor& context_h) const;

  diff::Tensor label_head(const diff::Tensor& y_t) const;
  diff::Tensor vector_head(const diff::Tensor& y_t) const;
  // v2vs decoder feed: learned projection of the previous predicted vector.
  diff::Tensor feed_projection(const diff::Tensor& x_prev) const;

  // Runs encode plus exactly K decode steps. `teacher` supplies the
  // previous-step targets when the configured feed mode is teacher_forced
  // (training only); `dropout_rng` enables train-mode dropout on y_t.
  PredictionBundle forward(const diff::Tensor& x, diff::Mode mode,
                           RngStream* dropout_rng = nullptr,
                           const BatchTargets* teacher = nullptr) const;

  std::vector<std::pair<std::string, diff::Tensor>> named_parameters() const;

 private:
  ModelKind kind_;
  Seq2SeqConfig cfg_;
  diff::LstmParams encoder_;
  diff::LstmParams decoder_;
  diff::Tensor start_token_;  // learned, size C
  diff::Tensor label_w_, label_b_;
  diff::Tensor vec_w1_, vec_b1_, vec_w2_, vec_b2_;
  diff::Tensor proj_w_, proj_b_;  // v2vs only
};

diff::Tensor loss_v2ls(const PredictionBundle& bundle, const BatchTargets& targets, double alpha);
diff::Tensor loss_v2vs(const PredictionBundle& bundle, const BatchTargets& targets);
diff::Tensor loss_v2vsls(const PredictionBundle& bundle, const BatchTargets& targets, double alpha,
                         double lambda);

}  // namespace knnseq
