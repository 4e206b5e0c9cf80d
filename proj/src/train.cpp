#include "knnseq/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "knnseq/adam.hpp"
#include "knnseq/memnet.hpp"
#include "knnseq/util.hpp"

namespace knnseq {

using diff::Tensor;

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

Tensor gather_rows(const std::vector<double>& feats, std::size_t d,
                   const std::vector<std::size_t>& indices) {
  std::vector<double> out(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const double* src = feats.data() + indices[r] * d;
    std::copy(src, src + d, out.begin() + r * d);
  }
  return Tensor({indices.size(), d}, std::move(out));
}

int argmax_row(const double* row, std::size_t c) {
  int best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (row[j] > row[best]) best = static_cast<int>(j);
  }
  return best;
}

// Drives one model family through the shared training loop.
struct ModelDriver {
  ModelKind kind;
  std::unique_ptr<Seq2SeqModel> seq;
  std::unique_ptr<MemNetModel> mem;
  const TrainConfig* cfg = nullptr;
  const std::vector<double>* norm_feats = nullptr;
  const std::vector<int>* labels = nullptr;
  std::size_t n = 0, d = 0, classes = 0;

  static ModelDriver create(const TrainConfig& cfg, const std::vector<double>& norm_feats,
                            const std::vector<int>& labels, std::size_t n, std::size_t d,
                            std::size_t classes) {
    ModelDriver drv;
    drv.kind = cfg.kind;
    drv.cfg = &cfg;
    drv.norm_feats = &norm_feats;
    drv.labels = &labels;
    drv.n = n;
    drv.d = d;
    drv.classes = classes;
    if (kind_is_memnet(cfg.kind)) {
      MemNetConfig mc;
      mc.d = d;
      mc.classes = classes;
      mc.k = cfg.k;
      mc.slots = cfg.memory_slots;
      mc.embed = cfg.embed_dim;
      mc.tau = cfg.tau;
      mc.alpha = cfg.alpha;
      mc.lambda = cfg.lambda;
      mc.dropout_rate = cfg.dropout;
      drv.mem = std::make_unique<MemNetModel>(cfg.kind, mc, cfg.seed);
    } else {
      Seq2SeqConfig sc;
      sc.d = d;
      sc.classes = classes;
      sc.k = cfg.k;
      sc.hidden = cfg.hidden;
      sc.tau = cfg.tau;
      sc.alpha = cfg.alpha;
      sc.lambda = cfg.lambda;
      sc.dropout_rate = cfg.dropout;
      sc.feed = cfg.feed;
      drv.seq = std::make_unique<Seq2SeqModel>(cfg.kind, sc, cfg.seed);
    }
    return drv;
  }

  std::vector<std::pair<std::string, Tensor>> named_parameters() const {
    return seq ? seq->named_parameters() : mem->named_parameters();
  }

  Tensor model_loss(const PredictionBundle& bundle, const BatchTargets& bt) const {
    switch (kind) {
      case ModelKind::v2ls: return loss_v2ls(bundle, bt, cfg->alpha);
      case ModelKind::v2vs: return loss_v2vs(bundle, bt);
      case ModelKind::v2vsls: return loss_v2vsls(bundle, bt, cfg->alpha, cfg->lambda);
      case ModelKind::mnknn: return loss_mnknn(bundle, bt, cfg->alpha);
      case ModelKind::mnknn_vec: return loss_mnknn_vec(bundle, bt, cfg->alpha, cfg->lambda);
    }
    throw std::logic_error("model_loss: unknown kind");
  }

  Tensor batch_loss(const std::vector<std::size_t>& batch, const NeighborTargets& targets,
                    std::uint64_t epoch, std::uint64_t batch_no) const {
    if (seq) {
      Tensor x = gather_rows(*norm_feats, d, batch);
      BatchTargets bt = make_batch_targets(targets, *labels, batch, classes);
      RngStream drop = RngStream::derive(cfg->seed, "dropout", epoch, batch_no);
      PredictionBundle bundle = seq->forward(x, diff::Mode::train, &drop, &bt);
      return model_loss(bundle, bt);
    }
    std::vector<Tensor> per_sample;
    per_sample.reserve(batch.size());
    for (std::size_t i : batch) {
      RngStream mem_rng = RngStream::derive(cfg->seed, "memory", epoch, i);
      const auto slots = draw_memory_slots(n, cfg->memory_slots, mem_rng, i);
      Tensor memory = gather_memory(*norm_feats, d, slots);
      Tensor query = gather_rows(*norm_feats, d, {i});
      RngStream drop = RngStream::derive(cfg->seed, "dropout-mem", epoch, i);
      auto out = mem->forward(query, memory, diff::Mode::train, &drop);
      BatchTargets bt = make_batch_targets(targets, *labels, {i}, classes);
      per_sample.push_back(model_loss(out.bundle, bt));
    }
    return diff::mean_all(diff::mean_of(per_sample));
  }

  // Eval-mode predictions for a set of samples; used for early stopping.
  std::vector<int> predict_set(const std::vector<std::size_t>& indices,
                               const NeighborIndex* vote_index, std::uint64_t epoch) const {
    std::vector<int> preds(indices.size());
    if (seq) {
      Tensor x = gather_rows(*norm_feats, d, indices);
      PredictionBundle bundle = seq->forward(x, diff::Mode::eval);
      if (kind == ModelKind::v2vs) {
        for (std::size_t r = 0; r < indices.size(); ++r) {
          std::vector<Neighbor> found;
          for (const auto& xt : bundle.step_vectors) {
            const double* row = xt.values().data() + r * d;
            auto nn = vote_index->query(row, 1);
            found.push_back(nn[0]);
          }
          preds[r] = vote_among_neighbors(found, vote_index->labels(), classes);
        }
      } else {
        for (std::size_t r = 0; r < indices.size(); ++r) {
          preds[r] = argmax_row(bundle.final_label.values().data() + r * classes, classes);
        }
      }
      return preds;
    }
    for (std::size_t r = 0; r < indices.size(); ++r) {
      const std::size_t i = indices[r];
      RngStream mem_rng = RngStream::derive(cfg->seed, "memory-val", epoch, i);
      const auto slots = draw_memory_slots(n, cfg->memory_slots, mem_rng, i);
      Tensor memory = gather_memory(*norm_feats, d, slots);
      Tensor query = gather_rows(*norm_feats, d, {i});
      auto out = mem->forward(query, memory, diff::Mode::eval);
      preds[r] = argmax_row(out.bundle.final_label.values().data(), classes);
    }
    return preds;
  }
};

void fill_checkpoint_config(Checkpoint& ckpt, const TrainConfig& cfg, std::size_t d,
                            std::size_t classes) {
  ckpt.set_config("d", static_cast<double>(d));
  ckpt.set_config("classes", static_cast<double>(classes));
  ckpt.set_config("k", static_cast<double>(cfg.k));
  ckpt.set_config("tau", cfg.tau);
  ckpt.set_config("alpha", cfg.alpha);
  ckpt.set_config("lambda", cfg.lambda);
  ckpt.set_config("dropout", cfg.dropout);
  ckpt.set_config("feed", cfg.feed == FeedMode::teacher_forced ? 1.0 : 0.0);
  ckpt.set_config("seed", static_cast<double>(cfg.seed));
  if (kind_is_memnet(cfg.kind)) {
    ckpt.set_config("memory_slots", static_cast<double>(cfg.memory_slots));
    ckpt.set_config("embed_dim", static_cast<double>(cfg.embed_dim));
  } else {
    ckpt.set_config("hidden", static_cast<double>(cfg.hidden));
  }
}

using TargetRefresh =
    std::function<void(std::uint64_t epoch, const std::vector<std::size_t>& batch,
                       NeighborTargets& buffer)>;

TrainResult run_training(const Dataset& ds, const NormStats& stats,
                         const std::vector<double>& norm_feats, const TrainConfig& cfg,
                         NeighborTargets working_targets, const TargetRefresh& refresh) {
  if (cfg.epochs < 0 || cfg.minibatch < 1) {
    throw std::invalid_argument("train: epochs must be >= 0 and minibatch >= 1");
  }
  if (cfg.k < 1) {
    throw std::invalid_argument("train: k must be >= 1");
  }

  ModelDriver driver = ModelDriver::create(cfg, norm_feats, ds.labels, ds.n, ds.d, ds.num_classes);

  std::vector<Tensor> params;
  for (auto& [name, t] : driver.named_parameters()) params.push_back(t);
  AdamOptimizer optimizer(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

  // Held-out split for early stopping.
  std::vector<std::size_t> order(ds.n);
  std::iota(order.begin(), order.end(), 0);
  RngStream split_rng = RngStream::derive(cfg.seed, "valsplit");
  split_rng.shuffle(order);
  std::size_t n_val = cfg.patience > 0
                          ? static_cast<std::size_t>(static_cast<double>(ds.n) * cfg.val_fraction)
                          : 0;
  if (n_val >= ds.n) n_val = 0;
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  const std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());

  std::unique_ptr<NeighborIndex> vote_index;
  if (cfg.kind == ModelKind::v2vs) {
    vote_index = std::make_unique<NeighborIndex>(norm_feats, ds.labels, ds.n, ds.d);
  }

  TrainResult result;
  double best_val_f1 = -1.0;
  int epochs_without_improvement = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle_rng = RngStream::derive(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> perm = train_idx;
    shuffle_rng.shuffle(perm);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::uint64_t batch_no = 0;
    for (std::size_t begin = 0; begin < perm.size(); begin += cfg.minibatch) {
      const std::size_t end = std::min(perm.size(), begin + cfg.minibatch);
      const std::vector<std::size_t> batch(perm.begin() + begin, perm.begin() + end);
      {
        Stopwatch prep;
        refresh(static_cast<std::uint64_t>(epoch), batch, working_targets);
        result.prep_seconds += prep.seconds();
      }
      Stopwatch fit;
      optimizer.zero_grad();
      Tensor loss = driver.batch_loss(batch, working_targets, static_cast<std::uint64_t>(epoch),
                                      batch_no);
      loss.backward();
      optimizer.step();
      result.train_seconds += fit.seconds();
      loss_sum += loss.item() * static_cast<double>(batch.size());
      seen += batch.size();
      ++batch_no;
    }
    const double epoch_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
    result.epoch_losses.push_back(epoch_loss);
    result.epochs_run = epoch + 1;

    double val_f1 = -1.0;
    if (!val_idx.empty()) {
      const std::vector<int> preds =
          driver.predict_set(val_idx, vote_index.get(), static_cast<std::uint64_t>(epoch));
      std::vector<int> truth(val_idx.size());
      for (std::size_t r = 0; r < val_idx.size(); ++r) truth[r] = ds.labels[val_idx[r]];
      val_f1 = macro_f1(preds, truth, ds.num_classes);
    }
    if (cfg.verbose) {
      if (val_f1 >= 0.0) {
        std::printf("epoch %d: loss %.6f val_macro_f1 %.4f\n", epoch + 1, epoch_loss, val_f1);
      } else {
        std::printf("epoch %d: loss %.6f\n", epoch + 1, epoch_loss);
      }
      std::fflush(stdout);
    }
    if (!val_idx.empty()) {
      if (val_f1 > best_val_f1) {
        best_val_f1 = val_f1;
        epochs_without_improvement = 0;
      } else if (++epochs_without_improvement >= cfg.patience) {
        break;
      }
    }
  }

  result.checkpoint.kind = to_string(cfg.kind);
  fill_checkpoint_config(result.checkpoint, cfg, ds.d, ds.num_classes);
  result.checkpoint.stats = stats;
  result.checkpoint.label_map = ds.label_map;
  for (auto& [name, t] : driver.named_parameters()) {
    result.checkpoint.params.emplace_back(name, t.detached());
  }
  return result;
}

// Maps a dataset's class ids into the label space of `label_map`; errors on
// labels the model never saw.
std::vector<int> align_labels(const Dataset& ds, const std::vector<std::int64_t>& label_map) {
  std::vector<int> remap(ds.num_classes, -1);
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    const std::int64_t orig = ds.label_map[c];
    const auto it = std::find(label_map.begin(), label_map.end(), orig);
    if (it == label_map.end()) {
      throw std::runtime_error("dataset contains label " + std::to_string(orig) +
                               " that the model was not trained on");
    }
    remap[c] = static_cast<int>(it - label_map.begin());
  }
  std::vector<int> out(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) out[i] = remap[static_cast<std::size_t>(ds.labels[i])];
  return out;
}

}  // namespace

TrainResult train(const Dataset& train_data, const TargetsFile& targets, const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::full) {
    throw std::invalid_argument("train: config mode is not 'full'; use train_ooc");
  }
  const NeighborTargets& t = targets.targets;
  if (t.n != train_data.n || t.d != train_data.d) {
    throw std::invalid_argument("train: targets (" + std::to_string(t.n) + " x " +
                                std::to_string(t.d) + ") are misaligned with the dataset (" +
                                std::to_string(train_data.n) + " x " +
                                std::to_string(train_data.d) + ")");
  }
  if (t.k != cfg.k) {
    throw std::invalid_argument("train: targets hold K=" + std::to_string(t.k) +
                                " neighbors but the config asks for K=" + std::to_string(cfg.k));
  }
  if (targets.label_map != train_data.label_map) {
    throw std::invalid_argument("train: targets label map does not match the dataset");
  }
  const std::vector<double> norm_feats = normalize_matrix(targets.stats, train_data);
  return run_training(train_data, targets.stats, norm_feats, cfg, targets.targets,
                      [](std::uint64_t, const std::vector<std::size_t>&, NeighborTargets&) {});
}

TrainResult train_ooc(const Dataset& train_data, const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::ooc) {
    throw std::invalid_argument("train_ooc: config mode is not 'ooc'");
  }
  if (cfg.ooc.batch <= cfg.k) {
    throw std::invalid_argument("train_ooc: B=" + std::to_string(cfg.ooc.batch) +
                                " must exceed K=" + std::to_string(cfg.k));
  }
  const NormStats stats = normalize_fit(train_data);
  const std::vector<double> norm_feats = normalize_matrix(stats, train_data);
  NeighborIndex index(norm_feats, train_data.labels, train_data.n, train_data.d);

  NeighborTargets buffer;
  buffer.n = train_data.n;
  buffer.k = cfg.k;
  buffer.d = train_data.d;
  buffer.labels.assign(buffer.n * buffer.k, 0);
  buffer.vectors.assign(buffer.n * buffer.k * buffer.d, 0.0);
  buffer.distances.assign(buffer.n * buffer.k, 0.0);

  const OocConfig ooc = cfg.ooc;
  const std::size_t k = cfg.k;
  const int threads = cfg.threads;
  auto refresh = [&index, ooc, k, threads](std::uint64_t epoch,
                                           const std::vector<std::size_t>& batch,
                                           NeighborTargets& buf) {
    parallel_for(batch.size(), threads, [&](std::size_t r) {
      const std::size_t i = batch[r];
      const auto list = ooc_neighbor_list(index, k, ooc, i, epoch);
      for (std::size_t j = 0; j < k; ++j) {
        buf.labels[i * k + j] = index.label(list[j].index);
        buf.distances[i * k + j] = list[j].distance;
        const double* src = index.row(list[j].index);
        std::copy(src, src + buf.d, buf.vectors.begin() + (i * k + j) * buf.d);
      }
    });
  };
  return run_training(train_data, stats, norm_feats, cfg, std::move(buffer), refresh);
}

double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                std::size_t num_classes) {
  return compute_metrics(predictions, labels, num_classes).macro_f1;
}

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                        std::size_t num_classes) {
  if (predictions.empty() || predictions.size() != labels.size()) {
    throw std::invalid_argument("compute_metrics: empty or mismatched prediction/label lists");
  }
  Metrics m;
  m.num_samples = predictions.size();
  m.confusion.assign(num_classes, std::vector<long long>(num_classes, 0));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int t = labels[i];
    const int p = predictions[i];
    if (t < 0 || static_cast<std::size_t>(t) >= num_classes || p < 0 ||
        static_cast<std::size_t>(p) >= num_classes) {
      throw std::invalid_argument("compute_metrics: class id out of range at sample " +
                                  std::to_string(i));
    }
    m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]++;
  }
  m.precision.assign(num_classes, 0.0);
  m.recall.assign(num_classes, 0.0);
  m.f1.assign(num_classes, 0.0);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    long long tp = m.confusion[c][c];
    long long fp = 0, fn = 0;
    for (std::size_t o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fp += m.confusion[o][c];
      fn += m.confusion[c][o];
    }
    const double prec = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.precision[c] = prec;
    m.recall[c] = rec;
    m.f1[c] = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    f1_sum += m.f1[c];
  }
  m.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return m;
}

int vote_among_neighbors(const std::vector<Neighbor>& neighbors, const std::vector<int>& labels,
                         std::size_t num_classes) {
  if (neighbors.empty()) {
    throw std::invalid_argument("vote_among_neighbors: no neighbors to vote with");
  }
  std::vector<std::size_t> counts(num_classes, 0);
  std::vector<double> dist_sums(num_classes, 0.0);
  for (const Neighbor& nb : neighbors) {
    const int c = labels[nb.index];
    counts[static_cast<std::size_t>(c)]++;
    dist_sums[static_cast<std::size_t>(c)] += nb.distance;
  }
  int best = -1;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) continue;
    if (best < 0 || counts[c] > counts[best] ||
        (counts[c] == counts[static_cast<std::size_t>(best)] &&
         dist_sums[c] < dist_sums[static_cast<std::size_t>(best)])) {
      best = static_cast<int>(c);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Predictor

struct Predictor::Impl {
  ModelKind kind;
  std::size_t d = 0;
  std::size_t classes = 0;
  NormStats stats;
  EvalOptions opts;
  std::unique_ptr<Seq2SeqModel> seq;
  std::unique_ptr<MemNetModel> mem;
  std::unique_ptr<NeighborIndex> vote_index;  // v2vs voting reference
  std::vector<double> train_norm;             // memnet memory source
  std::size_t train_n = 0;
  std::size_t memory_slots = 0;
};

namespace {

void load_model_params(const Checkpoint& ckpt,
                       const std::vector<std::pair<std::string, Tensor>>& live) {
  if (live.size() != ckpt.params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(ckpt.params.size()) +
                             " parameters, the model expects " + std::to_string(live.size()));
  }
  for (auto& [name, tensor] : live) {
    const Tensor& stored = ckpt.param(name);
    if (stored.shape() != tensor.shape()) {
      throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                               diff::shape_str(stored.shape()) + ", expected " +
                               diff::shape_str(tensor.shape()));
    }
    const_cast<Tensor&>(tensor).values() = stored.values();
  }
}

}  // namespace

Predictor::Predictor(const Checkpoint& ckpt, const Dataset* train_reference,
                     const EvalOptions& opts)
    : impl_(std::make_unique<Impl>()) {
  impl_->kind = model_kind_from_string(ckpt.kind);
  impl_->d = static_cast<std::size_t>(ckpt.config_value("d"));
  impl_->classes = static_cast<std::size_t>(ckpt.config_value("classes"));
  impl_->stats = ckpt.stats;
  impl_->opts = opts;
  const std::size_t k = static_cast<std::size_t>(ckpt.config_value("k"));
  const double tau = ckpt.config_value("tau");

  if (kind_is_memnet(impl_->kind)) {
    MemNetConfig mc;
    mc.d = impl_->d;
    mc.classes = impl_->classes;
    mc.k = k;
    mc.slots = static_cast<std::size_t>(ckpt.config_value("memory_slots"));
    mc.embed = static_cast<std::size_t>(ckpt.config_value("embed_dim"));
    mc.tau = tau;
    impl_->mem = std::make_unique<MemNetModel>(impl_->kind, mc, 0);
    load_model_params(ckpt, impl_->mem->named_parameters());
    if (train_reference == nullptr) {
      throw std::invalid_argument("Predictor: " + ckpt.kind +
                                  " needs the training set for memory draws");
    }
    impl_->train_norm = normalize_matrix(impl_->stats, *train_reference);
    impl_->train_n = train_reference->n;
    impl_->memory_slots = mc.slots;
    if (impl_->train_n < mc.slots) {
      throw std::invalid_argument("Predictor: training set has " + std::to_string(impl_->train_n) +
                                  " samples, fewer than the " + std::to_string(mc.slots) +
                                  " memory slots");
    }
  } else {
    Seq2SeqConfig sc;
    sc.d = impl_->d;
    sc.classes = impl_->classes;
    sc.k = k;
    sc.hidden = static_cast<std::size_t>(ckpt.config_value("hidden"));
    sc.tau = tau;
    impl_->seq = std::make_unique<Seq2SeqModel>(impl_->kind, sc, 0);
    load_model_params(ckpt, impl_->seq->named_parameters());
    if (impl_->kind == ModelKind::v2vs) {
      if (train_reference == nullptr || train_reference->n == 0) {
        throw std::invalid_argument("Predictor: v2vs voting needs a non-empty training set");
      }
      impl_->vote_index = std::make_unique<NeighborIndex>(
          normalize_matrix(impl_->stats, *train_reference), train_reference->labels,
          train_reference->n, train_reference->d);
    }
  }
}

Predictor::~Predictor() = default;
Predictor::Predictor(Predictor&&) noexcept = default;

ModelKind Predictor::kind() const { return impl_->kind; }
std::size_t Predictor::num_classes() const { return impl_->classes; }
std::size_t Predictor::dim() const { return impl_->d; }

PredictionBundle Predictor::predict_bundle(const double* raw_features,
                                           std::uint64_t query_tag) const {
  std::vector<double> norm(impl_->d);
  impl_->stats.apply(raw_features, norm.data());
  Tensor x({1, impl_->d}, std::move(norm));
  if (impl_->seq) {
    return impl_->seq->forward(x, diff::Mode::eval);
  }
  RngStream mem_rng =
      RngStream::derive(impl_->opts.seed, "memory-eval", query_tag, /*draw*/ 0);
  const auto slots = draw_memory_slots(impl_->train_n, impl_->memory_slots, mem_rng);
  Tensor memory = gather_memory(impl_->train_norm, impl_->d, slots);
  return impl_->mem->forward(x, memory, diff::Mode::eval).bundle;
}

int Predictor::predict(const double* raw_features, std::uint64_t query_tag) const {
  std::vector<double> norm(impl_->d);
  impl_->stats.apply(raw_features, norm.data());
  Tensor x({1, impl_->d}, std::vector<double>(norm));

  if (impl_->seq) {
    PredictionBundle bundle = impl_->seq->forward(x, diff::Mode::eval);
    if (impl_->kind == ModelKind::v2vs) {
      std::vector<Neighbor> found;
      for (const auto& xt : bundle.step_vectors) {
        found.push_back(impl_->vote_index->query(xt.values().data(), 1)[0]);
      }
      return vote_among_neighbors(found, impl_->vote_index->labels(), impl_->classes);
    }
    return argmax_row(bundle.final_label.values().data(), impl_->classes);
  }

  const int draws = std::max(1, impl_->opts.memory_draws);
  std::vector<double> mean_dist(impl_->classes, 0.0);
  for (int dr = 0; dr < draws; ++dr) {
    RngStream mem_rng = RngStream::derive(impl_->opts.seed, "memory-eval", query_tag,
                                          static_cast<std::uint64_t>(dr));
    const auto slots = draw_memory_slots(impl_->train_n, impl_->memory_slots, mem_rng);
    Tensor memory = gather_memory(impl_->train_norm, impl_->d, slots);
    auto out = impl_->mem->forward(x, memory, diff::Mode::eval);
    const auto& dist = out.bundle.final_label.values();
    for (std::size_t c = 0; c < impl_->classes; ++c) mean_dist[c] += dist[c];
  }
  return argmax_row(mean_dist.data(), impl_->classes);
}

std::vector<int> Predictor::predict_batch(const Dataset& data) const {
  if (data.d != impl_->d) {
    throw std::invalid_argument("predict_batch: dataset dimension " + std::to_string(data.d) +
                                " does not match model dimension " + std::to_string(impl_->d));
  }
  std::vector<int> preds(data.n);
  if (impl_->seq) {
    // Chunked batched forward keeps the matmuls large.
    const std::size_t chunk = 512;
    std::vector<double> norm = normalize_matrix(impl_->stats, data);
    for (std::size_t begin = 0; begin < data.n; begin += chunk) {
      const std::size_t end = std::min(data.n, begin + chunk);
      const std::size_t m = end - begin;
      Tensor x({m, impl_->d},
               std::vector<double>(norm.begin() + begin * impl_->d, norm.begin() + end * impl_->d));
      PredictionBundle bundle = impl_->seq->forward(x, diff::Mode::eval);
      if (impl_->kind == ModelKind::v2vs) {
        parallel_for(m, impl_->opts.threads, [&](std::size_t r) {
          std::vector<Neighbor> found;
          for (const auto& xt : bundle.step_vectors) {
            found.push_back(impl_->vote_index->query(xt.values().data() + r * impl_->d, 1)[0]);
          }
          preds[begin + r] =
              vote_among_neighbors(found, impl_->vote_index->labels(), impl_->classes);
        });
      } else {
        for (std::size_t r = 0; r < m; ++r) {
          preds[begin + r] =
              argmax_row(bundle.final_label.values().data() + r * impl_->classes, impl_->classes);
        }
      }
    }
    return preds;
  }
  parallel_for(data.n, impl_->opts.threads,
               [&](std::size_t i) { preds[i] = predict(data.row(i), i); });
  return preds;
}

int predict_label(const Checkpoint& ckpt, const std::vector<double>& raw_features,
                  const Dataset* train_reference, const EvalOptions& opts,
                  std::uint64_t query_tag) {
  Predictor predictor(ckpt, train_reference, opts);
  if (raw_features.size() != predictor.dim()) {
    throw std::invalid_argument("predict_label: feature vector has " +
                                std::to_string(raw_features.size()) + " entries, model expects " +
                                std::to_string(predictor.dim()));
  }
  return predictor.predict(raw_features.data(), query_tag);
}

Metrics evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& test,
                            const Dataset* train_reference, const EvalOptions& opts) {
  Predictor predictor(ckpt, train_reference, opts);
  const std::vector<int> preds = predictor.predict_batch(test);
  const std::vector<int> truth = align_labels(test, ckpt.label_map);
  return compute_metrics(preds, truth, ckpt.label_map.size());
}

Metrics baseline_knn_classify(const Dataset& train, const Dataset& test, std::size_t k,
                              KnnMode mode, const OocConfig& ooc, int threads) {
  if (train.n == 0) {
    throw std::invalid_argument("baseline_knn_classify: empty training set");
  }
  if (mode == KnnMode::full && train.n < k) {
    throw std::invalid_argument("baseline_knn_classify: training set smaller than K");
  }
  const NormStats stats = normalize_fit(train);
  const NeighborIndex index = NeighborIndex::build(train, stats);
  const std::vector<double> test_norm = normalize_matrix(stats, test);
  const std::vector<int> truth = align_labels(test, train.label_map);

  std::vector<int> preds(test.n);
  parallel_for(test.n, threads, [&](std::size_t i) {
    const double* q = test_norm.data() + i * test.d;
    std::vector<Neighbor> nbrs;
    if (mode == KnnMode::full) {
      nbrs = index.query(q, k);
    } else {
      RngStream draw = RngStream::derive(ooc.seed, "ooc-baseline", i);
      nbrs = ooc_query(index, q, k, ooc, draw);
    }
    preds[i] = vote_among_neighbors(nbrs, index.labels(), train.num_classes);
  });
  return compute_metrics(preds, truth, train.num_classes);
}

NeighborTargets swap_targets_ablation(NeighborTargets targets, std::size_t rank_i,
                                      std::size_t rank_j) {
  if (rank_i < 1 || rank_i > targets.k || rank_j < 1 || rank_j > targets.k) {
    throw std::invalid_argument("swap_targets_ablation: ranks must lie in [1, " +
                                std::to_string(targets.k) + "]");
  }
  if (rank_i == rank_j) {
    return targets;
  }
  const std::size_t a = rank_i - 1;
  const std::size_t b = rank_j - 1;
  for (std::size_t i = 0; i < targets.n; ++i) {
    std::swap(targets.labels[i * targets.k + a], targets.labels[i * targets.k + b]);
    std::swap(targets.distances[i * targets.k + a], targets.distances[i * targets.k + b]);
    for (std::size_t j = 0; j < targets.d; ++j) {
      std::swap(targets.vectors[(i * targets.k + a) * targets.d + j],
                targets.vectors[(i * targets.k + b) * targets.d + j]);
    }
  }
  return targets;
}

std::string metrics_report(const Metrics& metrics, const std::vector<std::int64_t>& label_map) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "macro_f1: %.6f\n", metrics.macro_f1);
  out += line;
  std::snprintf(line, sizeof(line), "samples: %zu\n", metrics.num_samples);
  out += line;
  for (std::size_t c = 0; c < metrics.f1.size(); ++c) {
    const long long orig = c < label_map.size() ? label_map[c] : static_cast<long long>(c);
    std::snprintf(line, sizeof(line), "class %lld: precision %.6f recall %.6f f1 %.6f\n", orig,
                  metrics.precision[c], metrics.recall[c], metrics.f1[c]);
    out += line;
  }
  out += "confusion:";
  for (const auto& row : metrics.confusion) {
    out += "\n ";
    for (long long v : row) {
      std::snprintf(line, sizeof(line), " %lld", v);
      out += line;
    }
  }
  out += "\n";
  if (metrics.prep_seconds > 0.0 || metrics.train_seconds > 0.0) {
    std::snprintf(line, sizeof(line), "prep_seconds: %.3f\ntrain_seconds: %.3f\n",
                  metrics.prep_seconds, metrics.train_seconds);
    out += line;
  }
  return out;
}

std::string metrics_json(const Metrics& metrics, const std::vector<std::int64_t>& label_map) {
  nlohmann::ordered_json j;
  j["macro_f1"] = metrics.macro_f1;
  j["samples"] = metrics.num_samples;
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < metrics.f1.size(); ++c) {
    nlohmann::ordered_json cl;
    cl["label"] = c < label_map.size() ? label_map[c] : static_cast<std::int64_t>(c);
    cl["precision"] = metrics.precision[c];
    cl["recall"] = metrics.recall[c];
    cl["f1"] = metrics.f1[c];
    classes.push_back(cl);
  }
  j["classes"] = classes;
  j["confusion"] = metrics.confusion;
  return j.dump(2) + "\n";
}

}  // namespace knnseq
