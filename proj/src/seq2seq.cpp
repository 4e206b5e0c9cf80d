#include "knnseq/seq2seq.hpp"

#include <cmath>
#include <stdexcept>

namespace knnseq {

using diff::Tensor;

namespace {

Tensor init_weight(std::vector<std::size_t> shape, std::uint64_t seed, const std::string& name) {
  RngStream rng = RngStream::derive(seed, "init:" + name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
  return diff::uniform_init(std::move(shape), bound, rng);
}

}  // namespace

Seq2SeqModel::Seq2SeqModel(ModelKind kind, const Seq2SeqConfig& cfg, std::uint64_t seed)
    : kind_(kind), cfg_(cfg) {
  if (kind_is_memnet(kind)) {
    throw std::invalid_argument("Seq2SeqModel: " + to_string(kind) + " is not a seq2seq kind");
  }
  if (cfg.d == 0 || cfg.classes < 2 || cfg.k < 1 || cfg.hidden < 1) {
    throw std::invalid_argument("Seq2SeqModel: invalid config (d=" + std::to_string(cfg.d) +
                                ", C=" + std::to_string(cfg.classes) +
                                ", K=" + std::to_string(cfg.k) + ")");
  }
  if (cfg.tau <= 0.0) {
    throw std::invalid_argument("Seq2SeqModel: tau must be positive");
  }

  {
    RngStream enc_rng = RngStream::derive(seed, "init:encoder");
    encoder_ = diff::LstmParams::make(cfg.d, cfg.hidden, enc_rng);
    RngStream dec_rng = RngStream::derive(seed, "init:decoder");
    decoder_ = diff::LstmParams::make(cfg.classes + cfg.hidden, cfg.hidden, dec_rng);
  }
  start_token_ =
      Tensor::full({cfg.classes}, 1.0 / static_cast<double>(cfg.classes), true);

  if (kind_has_label_head(kind_)) {
    label_w_ = init_weight({cfg.hidden, cfg.classes}, seed, "label_head.w");
    label_b_ = Tensor::zeros({cfg.classes}, true);
  }
  if (kind_has_vector_head(kind_)) {
    vec_w1_ = init_weight({cfg.hidden, cfg.hidden}, seed, "vector_head.w1");
    vec_b1_ = Tensor::zeros({cfg.hidden}, true);
    vec_w2_ = init_weight({cfg.hidden, cfg.d}, seed, "vector_head.w2");
    vec_b2_ = Tensor::zeros({cfg.d}, true);
  }
  if (kind_ == ModelKind::v2vs) {
    proj_w_ = init_weight({cfg.d, cfg.classes}, seed, "feed_projection.w");
    proj_b_ = Tensor::zeros({cfg.classes}, true);
  }
}

diff::LstmOut Seq2SeqModel::encode(const Tensor& x) const {
  if (x.cols() != cfg_.d) {
    throw std::invalid_argument("encode: input " + diff::shape_str(x.shape()) +
                                " does not match feature dimension " + std::to_string(cfg_.d));
  }
  const std::size_t m = x.rows();
  Tensor h0 = Tensor::zeros({m, cfg_.hidden});
  Tensor c0 = Tensor::zeros({m, cfg_.hidden});
  return diff::lstm_cell_step(x, h0, c0, encoder_);
}

std::pair<Tensor, Seq2SeqModel::DecodeState> Seq2SeqModel::decode_step(
    const Tensor& prev_feed, DecodeState state, const Tensor& context_h) const {
  if (state.step >= cfg_.k) {
    throw std::logic_error("decode_step: already performed " + std::to_string(cfg_.k) + " steps");
  }
  Tensor input = diff::concat_cols(prev_feed, context_h);
  diff::LstmOut out = diff::lstm_cell_step(input, state.h, state.c, decoder_);
  DecodeState next{out.h, out.c, state.step + 1};
  return {out.h, std::move(next)};
}

Tensor Seq2SeqModel::label_head(const Tensor& y_t) const {
  if (!kind_has_label_head(kind_)) {
    throw std::logic_error("label_head: " + to_string(kind_) + " has no label head");
  }
  return diff::softmax_with_temperature(diff::affine(y_t, label_w_, label_b_), cfg_.tau);
}

Tensor Seq2SeqModel::vector_head(const Tensor& y_t) const {
  if (!kind_has_vector_head(kind_)) {
    throw std::logic_error("vector_head: " + to_string(kind_) + " has no vector head");
  }
  Tensor hidden = diff::activation(diff::affine(y_t, vec_w1_, vec_b1_), diff::Activation::relu);
  return diff::affine(hidden, vec_w2_, vec_b2_);
}

Tensor Seq2SeqModel::feed_projection(const Tensor& x_prev) const {
  if (kind_ != ModelKind::v2vs) {
    throw std::logic_error("feed_projection: only v2vs feeds projected vectors");
  }
  return diff::affine(x_prev, proj_w_, proj_b_);
}

PredictionBundle Seq2SeqModel::forward(const Tensor& x, diff::Mode mode, RngStream* dropout_rng,
                                       const BatchTargets* teacher) const {
  const std::size_t m = x.rows();
  const bool teacher_forced = cfg_.feed == FeedMode::teacher_forced && mode == diff::Mode::train;
  if (teacher_forced && teacher == nullptr) {
    throw std::invalid_argument("forward: teacher-forced feed requires batch targets");
  }
  RngStream unused_rng;
  RngStream& rng = dropout_rng ? *dropout_rng : unused_rng;
  const diff::Mode dropout_mode = dropout_rng ? mode : diff::Mode::eval;

  diff::LstmOut enc = encode(x);
  DecodeState state{enc.h, enc.c, 0};
  Tensor feed = diff::broadcast_rows(start_token_, m);

  PredictionBundle bundle;
  for (std::size_t t = 0; t < cfg_.k; ++t) {
    auto [y_t, next] = decode_step(feed, std::move(state), enc.h);
    state = std::move(next);
    Tensor y_head = diff::dropout(y_t, cfg_.dropout_rate, dropout_mode, rng);
    Tensor step_label;
    Tensor step_vector;
    if (kind_has_label_head(kind_)) {
      step_label = label_head(y_head);
      bundle.step_labels.push_back(step_label);
    }
    if (kind_has_vector_head(kind_)) {
      step_vector = vector_head(y_head);
      bundle.step_vectors.push_back(step_vector);
    }
    if (t + 1 < cfg_.k) {
      if (kind_ == ModelKind::v2vs) {
        feed = teacher_forced ? feed_projection(teacher->step_vectors[t])
                              : feed_projection(step_vector);
      } else {
        feed = teacher_forced ? teacher->step_label_onehots[t] : step_label;
      }
    }
  }
  if (kind_has_label_head(kind_)) {
    bundle.final_label = diff::mean_of(bundle.step_labels);
  }
  return bundle;
}

std::vector<std::pair<std::string, Tensor>> Seq2SeqModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("encoder.w", encoder_.w);
  params.emplace_back("encoder.b", encoder_.b);
  params.emplace_back("decoder.w", decoder_.w);
  params.emplace_back("decoder.b", decoder_.b);
  params.emplace_back("start_token", start_token_);
  if (kind_has_label_head(kind_)) {
    params.emplace_back("label_head.w", label_w_);
    params.emplace_back("label_head.b", label_b_);
  }
  if (kind_has_vector_head(kind_)) {
    params.emplace_back("vector_head.w1", vec_w1_);
    params.emplace_back("vector_head.b1", vec_b1_);
    params.emplace_back("vector_head.w2", vec_w2_);
    params.emplace_back("vector_head.b2", vec_b2_);
  }
  if (kind_ == ModelKind::v2vs) {
    params.emplace_back("feed_projection.w", proj_w_);
    params.emplace_back("feed_projection.b", proj_b_);
  }
  return params;
}

Tensor loss_v2ls(const PredictionBundle& bundle, const BatchTargets& targets, double alpha) {
  return label_sequence_loss(bundle, targets, alpha);
}

Tensor loss_v2vs(const PredictionBundle& bundle, const BatchTargets& targets) {
  return vector_sequence_loss(bundle, targets);
}

Tensor loss_v2vsls(const PredictionBundle& bundle, const BatchTargets& targets, double alpha,
                   double lambda) {
  Tensor l1 = label_sequence_loss(bundle, targets, alpha);
  if (lambda == 0.0) {
    return l1;
  }
  return diff::add(l1, diff::scale(vector_sequence_loss(bundle, targets), lambda));
}

}  // namespace knnseq
