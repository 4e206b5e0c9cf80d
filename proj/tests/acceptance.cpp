// Acceptance suite: one check per release criterion, each printing a
// [PASS]/[FAIL] line. Run with --only N to execute a single criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "knnseq/adam.hpp"
#include "knnseq/dataset.hpp"
#include "knnseq/knn.hpp"
#include "knnseq/memnet.hpp"
#include "knnseq/ops.hpp"
#include "knnseq/oversample.hpp"
#include "knnseq/seq2seq.hpp"
#include "knnseq/targets_io.hpp"
#include "knnseq/train.hpp"
#include "knnseq/util.hpp"
#include "testutil.hpp"

using knnseq::Dataset;
using knnseq::ModelKind;
using knnseq::NeighborIndex;
using knnseq::OocConfig;
using knnseq::RngStream;
using knnseq::TrainConfig;
using knnseq::diff::Activation;
using knnseq::diff::Mode;
using knnseq::diff::Tensor;
namespace ops = knnseq::diff;

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

struct CheckContext {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

Tensor random_tensor(std::vector<std::size_t> shape, RngStream& rng, bool requires_grad = true) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * rng.next_double() - 1.0;
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor random_distribution_rows(std::size_t m, std::size_t c, RngStream& rng) {
  std::vector<double> v(m * c);
  for (std::size_t r = 0; r < m; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      v[r * c + j] = 0.05 + rng.next_double();
      sum += v[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) v[r * c + j] /= sum;
  }
  return Tensor({m, c}, std::move(v));
}

knnseq::BatchTargets random_batch_targets(std::size_t m, std::size_t d, std::size_t classes,
                                          std::size_t k, std::uint64_t seed) {
  knnseq::NeighborTargets nt;
  nt.n = m;
  nt.k = k;
  nt.d = d;
  RngStream rng = RngStream::derive(seed, "acc-targets");
  nt.labels.resize(m * k);
  nt.vectors.resize(m * k * d);
  nt.distances.resize(m * k, 0.0);
  for (auto& l : nt.labels) l = static_cast<int>(rng.next_index(classes));
  for (auto& v : nt.vectors) v = 2.0 * rng.next_double() - 1.0;
  std::vector<int> gt(m);
  for (auto& g : gt) g = static_cast<int>(rng.next_index(classes));
  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), 0);
  return knnseq::make_batch_targets(nt, gt, all, classes);
}

// --------------------------------------------------------------------------
// Synthetic datasets

// Credit-default-shaped surrogate: 30,000 x 23, two classes at roughly a
// 78/22 split. The classes overlap heavily; a few dimensions carry a weak
// shift while the rest are noise that dilutes the Euclidean metric the way
// weakly informative tabular features do.
Dataset make_ccd_like(std::uint64_t seed) {
  const std::size_t n = 30000;
  const std::size_t d = 23;
  const std::size_t informative = 6;
  const double shift = 0.55;
  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.num_classes = 2;
  ds.label_map = {0, 1};
  ds.features.resize(n * d);
  ds.labels.resize(n);
  RngStream rng = RngStream::derive(seed, "ccd-like");
  for (std::size_t i = 0; i < n; ++i) {
    const bool positive = rng.next_double() < 0.22;
    ds.labels[i] = positive ? 1 : 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double mean = (j < informative && positive) ? shift : 0.0;
      ds.features[i * d + j] = mean + rng.next_gaussian();
    }
  }
  return ds;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.n = rows.size();
  out.d = ds.d;
  out.num_classes = ds.num_classes;
  out.label_map = ds.label_map;
  out.features.resize(rows.size() * ds.d);
  out.labels.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(ds.row(rows[r]), ds.row(rows[r]) + ds.d, out.features.begin() + r * ds.d);
    out.labels[r] = ds.labels[rows[r]];
  }
  return out;
}

void split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed, Dataset& train,
                      Dataset& test) {
  std::vector<std::size_t> order(ds.n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng = RngStream::derive(seed, "acc-split");
  rng.shuffle(order);
  const std::size_t n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(ds.n));
  test = subset(ds, {order.begin(), order.begin() + n_test});
  train = subset(ds, {order.begin() + n_test, order.end()});
}

knnseq::TargetsFile exact_targets_file(const Dataset& ds, std::size_t k, int workers = 0) {
  knnseq::TargetsFile tf;
  tf.stats = knnseq::normalize_fit(ds);
  const auto index = NeighborIndex::build(ds, tf.stats);
  tf.targets = knnseq::exact_targets(index, k, workers);
  tf.label_map = ds.label_map;
  return tf;
}

double minority_f1(const knnseq::Metrics& metrics, std::size_t minority_class) {
  return metrics.f1[minority_class];
}

// --------------------------------------------------------------------------
// Criterion 1: gradient oracle suite

bool criterion_gradients(std::string& detail) {
  Stopwatch watch;
  CheckContext ctx;
  const double tol = 1e-4;
  RngStream rng = RngStream::derive(1001, "acc-grad");
  double worst = 0.0;
  auto track = [&](const char* what, double err, double bound) {
    worst = std::max(worst, err);
    ctx.require(err < bound, std::string(what) + " relative error " + std::to_string(err));
  };

  {
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({5}, rng);
    track("affine", testutil::max_grad_rel_error(
                        [&] {
                          return ops::mean_all(
                              ops::activation(ops::affine(x, w, b), Activation::tanh));
                        },
                        {x, w, b}),
          tol);
  }
  for (auto kind : {Activation::relu, Activation::tanh, Activation::sigmoid}) {
    Tensor x = random_tensor({4, 4}, rng);
    track("activation",
          testutil::max_grad_rel_error([&] { return ops::sum_all(ops::activation(x, kind)); },
                                       {x}),
          tol);
  }
  {
    Tensor z = random_tensor({3, 5}, rng);
    Tensor target = random_distribution_rows(3, 5, rng);
    track("softmax+kl", testutil::max_grad_rel_error(
                            [&] {
                              return ops::mean_all(ops::kl_divergence(
                                  target, ops::softmax_with_temperature(z, 0.85)));
                            },
                            {z}),
          tol);
  }
  {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    track("squared_l2",
          testutil::max_grad_rel_error([&] { return ops::mean_all(ops::squared_l2(a, b)); },
                                       {a, b}),
          tol);
  }
  {
    RngStream prng = RngStream::derive(1002, "acc-lstm");
    auto params = knnseq::diff::LstmParams::make(3, 4, prng);
    Tensor x = random_tensor({2, 3}, rng);
    Tensor h0 = random_tensor({2, 4}, rng);
    Tensor c0 = random_tensor({2, 4}, rng);
    track("lstm_cell", testutil::max_grad_rel_error(
                           [&] {
                             auto out = ops::lstm_cell_step(x, h0, c0, params);
                             return ops::mean_all(ops::mul(out.h, out.c));
                           },
                           {x, h0, c0, params.w, params.b}),
          tol);
  }
  {
    Tensor x = random_tensor({4, 4}, rng);
    track("dropout", testutil::max_grad_rel_error(
                         [&] {
                           RngStream mask = RngStream::derive(1003, "acc-dropout");
                           return ops::mean_all(ops::dropout(x, 0.3, Mode::train, mask));
                         },
                         {x}),
          tol);
  }
  {
    Tensor x = random_tensor({6, 3}, rng);
    auto state = knnseq::diff::BatchNormState::make(3);
    track("batch_norm", testutil::max_grad_rel_error(
                            [&] {
                              return ops::mean_all(ops::activation(
                                  ops::batch_norm(x, state, Mode::train), Activation::tanh));
                            },
                            {x, state.gamma, state.beta}),
          1e-3);
  }
  {
    // full v2vsls loss on the micro fixture (d=4, C=3, K=2, hidden=5)
    knnseq::Seq2SeqConfig cfg;
    cfg.d = 4;
    cfg.classes = 3;
    cfg.k = 2;
    cfg.hidden = 5;
    cfg.dropout_rate = 0.2;
    knnseq::Seq2SeqModel model(ModelKind::v2vsls, cfg, 1004);
    Tensor x = random_tensor({3, 4}, rng, false);
    auto bt = random_batch_targets(3, 4, 3, 2, 1005);
    std::vector<Tensor> params;
    for (auto& [n, t] : model.named_parameters()) params.push_back(t);
    track("v2vsls loss", testutil::max_grad_rel_error(
                             [&] {
                               RngStream drop = RngStream::derive(1006, "acc-v2vsls-drop");
                               auto bundle = model.forward(x, Mode::train, &drop, &bt);
                               return knnseq::loss_v2vsls(bundle, bt, 9.5, 0.12);
                             },
                             params),
          tol);
  }
  {
    // full mnknn_vec loss on the micro fixture (n=4, e=6)
    knnseq::MemNetConfig cfg;
    cfg.d = 4;
    cfg.classes = 3;
    cfg.k = 2;
    cfg.slots = 4;
    cfg.embed = 6;
    cfg.dropout_rate = 0.2;
    knnseq::MemNetModel model(ModelKind::mnknn_vec, cfg, 1007);
    Tensor query = random_tensor({1, 4}, rng, false);
    Tensor memory = random_tensor({4, 4}, rng, false);
    auto bt = random_batch_targets(1, 4, 3, 2, 1008);
    std::vector<Tensor> params;
    for (auto& [n, t] : model.named_parameters()) params.push_back(t);
    track("mnknn_vec loss", testutil::max_grad_rel_error(
                                [&] {
                                  RngStream drop = RngStream::derive(1009, "acc-mem-drop");
                                  auto out = model.forward(query, memory, Mode::train, &drop);
                                  return knnseq::loss_mnknn_vec(out.bundle, bt, 9.5, 0.12);
                                },
                                params),
          tol);
  }

  const double elapsed = watch.seconds();
  ctx.require(elapsed < 60.0, "runtime " + std::to_string(elapsed) + "s exceeds the minute budget");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "max rel err %.2e, %.1fs", worst, elapsed);
  detail = ctx.ok ? buf : ctx.detail;
  return ctx.ok;
}

// --------------------------------------------------------------------------
// Criterion 2: out-of-core equals exact under full coverage

bool criterion_ooc_equivalence(std::string& detail) {
  Stopwatch watch;
  CheckContext ctx;
  auto ds = testutil::gaussian_blobs(1000, 10, 4, 2.5, 2001);
  const auto stats = knnseq::normalize_fit(ds);
  const auto index = NeighborIndex::build(ds, stats);
  OocConfig cfg;
  cfg.batch = ds.n;
  cfg.rounds = 1;
  cfg.mode = knnseq::SampleMode::exhaustive;
  for (std::size_t i = 0; i < ds.n && ctx.ok; ++i) {
    const auto exact = knnseq::exact_neighbor_list(index, 5, i);
    const auto approx = knnseq::ooc_neighbor_list(index, 5, cfg, i);
    ctx.require(approx.size() == exact.size(), "list size mismatch at sample " + std::to_string(i));
    for (std::size_t j = 0; j < exact.size() && ctx.ok; ++j) {
      ctx.require(approx[j].index == exact[j].index && approx[j].distance == exact[j].distance,
                  "neighbor mismatch at sample " + std::to_string(i) + " rank " +
                      std::to_string(j + 1));
    }
  }
  const double elapsed = watch.seconds();
  ctx.require(elapsed < 60.0, "runtime " + std::to_string(elapsed) + "s exceeds the minute budget");
  char buf[128];
  std::snprintf(buf, sizeof(buf), "1000 samples identical, %.1fs", elapsed);
  detail = ctx.ok ? buf : ctx.detail;
  return ctx.ok;
}

// --------------------------------------------------------------------------
// Criterion 3: recall grows with the round count

bool criterion_recall_monotonic(std::string& detail) {
  Stopwatch watch;
  CheckContext ctx;
  auto ds = testutil::gaussian_blobs(10000, 10, 4, 2.5, 3001);
  const auto stats = knnseq::normalize_fit(ds);
  const auto index = NeighborIndex::build(ds, stats);

  std::vector<std::vector<knnseq::Neighbor>> exact(ds.n);
  knnseq::parallel_for(ds.n, 0,
                       [&](std::size_t i) { exact[i] = knnseq::exact_neighbor_list(index, 5, i); });

  const std::vector<std::size_t> round_grid{1, 5, 20, 50};
  std::vector<double> mean_recall(round_grid.size(), 0.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (std::size_t g = 0; g < round_grid.size(); ++g) {
      OocConfig cfg;
      cfg.batch = 64;
      cfg.rounds = round_grid[g];
      cfg.seed = seed;
      std::vector<double> recalls(ds.n, 0.0);
      knnseq::parallel_for(ds.n, 0, [&](std::size_t i) {
        const auto approx = knnseq::ooc_neighbor_list(index, 5, cfg, i);
        std::size_t hits = 0;
        for (const auto& a : approx) {
          for (const auto& e : exact[i]) {
            if (a.index == e.index) {
              ++hits;
              break;
            }
          }
        }
        recalls[i] = static_cast<double>(hits) / 5.0;
      });
      double total = 0.0;
      for (double r : recalls) total += r;
      mean_recall[g] += total / static_cast<double>(ds.n) / 5.0;
    }
  }
  for (std::size_t g = 1; g < round_grid.size(); ++g) {
    ctx.require(mean_recall[g] >= mean_recall[g - 1],
                "recall dropped between R=" + std::to_string(round_grid[g - 1]) + " and R=" +
                    std::to_string(round_grid[g]));
  }
  ctx.require(mean_recall.back() - mean_recall.front() >= 0.1,
              "recall gain " + std::to_string(mean_recall.back() - mean_recall.front()) +
                  " below 0.1");
  char buf[200];
  std::snprintf(buf, sizeof(buf), "recall@5: R1 %.3f, R5 %.3f, R20 %.3f, R50 %.3f, %.1fs",
                mean_recall[0], mean_recall[1], mean_recall[2], mean_recall[3], watch.seconds());
  detail = ctx.ok ? buf : ctx.detail;
  return ctx.ok;
}

// --------------------------------------------------------------------------
// Criteria 4 and 5: desk-scale classification and OOC baseline degradation

struct DeskScaleResults {
  double model_mean_f1 = 0.0;
  double knn_full_f1 = 0.0;
  double knn_ooc_f1 = 0.0;
  double seconds = 0.0;
  bool ready = false;
};

DeskScaleResults& desk_scale() {
  static DeskScaleResults results;
  if (results.ready) return results;
  Stopwatch watch;

  Dataset full = make_ccd_like(4001);
  Dataset train, test;
  split_train_test(full, 0.2, 4002, train, test);

  const auto tf = exact_targets_file(train, 5);

  const knnseq::Metrics knn_full =
      knnseq::baseline_knn_classify(train, test, 5, knnseq::KnnMode::full);
  results.knn_full_f1 = knn_full.macro_f1;

  OocConfig ooc;
  ooc.batch = 64;
  ooc.rounds = 1;
  ooc.seed = 4003;
  const knnseq::Metrics knn_ooc =
      knnseq::baseline_knn_classify(train, test, 5, knnseq::KnnMode::ooc, ooc);
  results.knn_ooc_f1 = knn_ooc.macro_f1;

  double model_total = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig cfg;
    cfg.kind = ModelKind::v2vsls;
    cfg.seed = seed;
    cfg.epochs = 10;
    cfg.patience = 3;
    cfg.verbose = true;
    auto result = knnseq::train(train, tf, cfg);
    const auto metrics = knnseq::evaluate_checkpoint(result.checkpoint, test, &train);
    std::printf("  seed %llu: v2vsls macro_f1 %.4f (%d epochs)\n",
                static_cast<unsigned long long>(seed), metrics.macro_f1, result.epochs_run);
    std::fflush(stdout);
    model_total += metrics.macro_f1;
  }
  results.model_mean_f1 = model_total / 3.0;
  results.seconds = watch.seconds();
  results.ready = true;
  return results;
}

bool criterion_desk_scale(std::string& detail) {
  const DeskScaleResults& r = desk_scale();
  const double gap_points = 100.0 * (r.model_mean_f1 - r.knn_full_f1);
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "v2vsls mean %.4f vs full kNN %.4f (gap %.1f points), %.0fs",
                r.model_mean_f1, r.knn_full_f1, gap_points, r.seconds);
  detail = buf;
  return gap_points >= 2.0;
}

bool criterion_ooc_baseline_degrades(std::string& detail) {
  const DeskScaleResults& r = desk_scale();
  char buf[160];
  std::snprintf(buf, sizeof(buf), "OOC kNN %.4f < full kNN %.4f", r.knn_ooc_f1, r.knn_full_f1);
  detail = buf;
  return r.knn_ooc_f1 < r.knn_full_f1;
}

// --------------------------------------------------------------------------
// Criterion 6: out-of-core preparation saves wall time

bool criterion_prep_time(std::string& detail) {
  auto ds = testutil::gaussian_blobs(100000, 100, 4, 2.0, 6001);
  const auto stats = knnseq::normalize_fit(ds);
  const auto index = NeighborIndex::build(ds, stats);
  const auto tmp_dir = std::filesystem::temp_directory_path() / "knnseq-acceptance";
  std::filesystem::create_directories(tmp_dir);

  Stopwatch full_watch;
  {
    knnseq::TargetsFile tf;
    tf.stats = stats;
    tf.label_map = ds.label_map;
    tf.targets = knnseq::exact_targets(index, 5);
    knnseq::write_targets(tf, (tmp_dir / "full.knnt").string());
  }
  const double full_seconds = full_watch.seconds();

  Stopwatch ooc_watch;
  {
    OocConfig cfg;
    cfg.batch = 64;
    cfg.rounds = 50;
    cfg.seed = 6002;
    knnseq::TargetsFile tf;
    tf.stats = stats;
    tf.label_map = ds.label_map;
    tf.targets = knnseq::ooc_targets(index, 5, cfg);
    knnseq::write_targets(tf, (tmp_dir / "ooc.knnt").string());
  }
  const double ooc_seconds = ooc_watch.seconds();
  std::filesystem::remove(tmp_dir / "full.knnt");
  std::filesystem::remove(tmp_dir / "ooc.knnt");

  char buf[160];
  std::snprintf(buf, sizeof(buf), "full %.0fs vs ooc %.0fs (ratio %.2f)", full_seconds,
                ooc_seconds, ooc_seconds / full_seconds);
  detail = buf;
  return ooc_seconds <= 0.8 * full_seconds;
}

// --------------------------------------------------------------------------
// Criterion 7: swapping neighbor ranks does not help

bool criterion_swap_ablation(std::string& detail) {
  Stopwatch watch;
  auto train_ds = testutil::two_gaussians(600, 4, 2.2, 0.5, 7001);
  auto test_ds = testutil::two_gaussians(400, 4, 2.2, 0.5, 7002);
  const auto tf = exact_targets_file(train_ds, 5);
  knnseq::TargetsFile swapped = tf;
  swapped.targets = knnseq::swap_targets_ablation(tf.targets, 1, 3);

  double original_total = 0.0;
  double swapped_total = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig cfg;
    cfg.kind = ModelKind::v2vsls;
    cfg.seed = seed;
    cfg.epochs = 12;
    cfg.hidden = 32;
    cfg.patience = 0;
    original_total +=
        knnseq::evaluate_checkpoint(knnseq::train(train_ds, tf, cfg).checkpoint, test_ds, &train_ds)
            .macro_f1;
    swapped_total += knnseq::evaluate_checkpoint(knnseq::train(train_ds, swapped, cfg).checkpoint,
                                                 test_ds, &train_ds)
                         .macro_f1;
  }
  const double original_mean = original_total / 3.0;
  const double swapped_mean = swapped_total / 3.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "original %.4f vs swapped %.4f over 3 seeds, %.0fs",
                original_mean, swapped_mean, watch.seconds());
  detail = buf;
  return swapped_mean <= original_mean;
}

// --------------------------------------------------------------------------
// Criterion 8: oversampler properties

bool criterion_oversampler(std::string& detail) {
  Stopwatch watch;
  CheckContext ctx;

  // (a) SMOTE collinearity across at least 10,000 synthetics
  {
    auto ds = testutil::two_gaussians(16000, 8, 3.0, 0.1875, 8001);  // 3000 vs 13000
    knnseq::OversampleConfig cfg;
    cfg.method = knnseq::OversampleMethod::smote;
    cfg.seed = 8002;
    const auto aug = knnseq::smote(ds, cfg);
    ctx.require(aug.synthetic.size() >= 10000,
                "only " + std::to_string(aug.synthetic.size()) + " synthetics generated");
    double worst = 0.0;
    for (const auto& row : aug.synthetic) {
      const auto src_pos = row.origin.find("src=");
      const auto nbr_pos = row.origin.find("nbr=");
      const std::size_t src = std::stoull(row.origin.substr(src_pos + 4));
      const std::size_t nbr = std::stoull(row.origin.substr(nbr_pos + 4));
      double to_src = 0.0, to_nbr = 0.0, base = 0.0;
      for (std::size_t j = 0; j < ds.d; ++j) {
        const double s = row.features[j];
        to_src += (s - ds.row(src)[j]) * (s - ds.row(src)[j]);
        to_nbr += (s - ds.row(nbr)[j]) * (s - ds.row(nbr)[j]);
        base += (ds.row(src)[j] - ds.row(nbr)[j]) * (ds.row(src)[j] - ds.row(nbr)[j]);
      }
      worst = std::max(
          worst, std::abs(std::sqrt(to_src) + std::sqrt(to_nbr) - std::sqrt(base)));
    }
    ctx.require(worst < 1e-9, "collinearity residual " + std::to_string(worst));
  }

  // (b) ADASYN allocations sum to G within the rounding bound
  {
    auto ds = testutil::two_gaussians(4000, 6, 2.0, 0.2, 8003);
    knnseq::OversampleConfig cfg;
    cfg.method = knnseq::OversampleMethod::adasyn;
    cfg.seed = 8004;
    const auto aug = knnseq::adasyn(ds, cfg);
    const auto counts = ds.class_counts();
    const long long g = static_cast<long long>(counts[0]) - static_cast<long long>(counts[1]);
    const long long produced = static_cast<long long>(aug.synthetic.size());
    ctx.require(std::llabs(produced - g) <= static_cast<long long>(counts[1]),
                "ADASYN allocation off by " + std::to_string(produced - g));
  }

  // (c) model oversampling does not hurt downstream minority F1
  double pre_total = 0.0;
  double post_total = 0.0;
  {
    for (std::uint64_t seed : {1, 2, 3}) {
      auto train_ds = testutil::two_gaussians(2200, 6, 1.5, 1.0 / 11.0, 8100 + seed);
      auto test_ds = testutil::two_gaussians(1100, 6, 1.5, 1.0 / 11.0, 8200 + seed);
      const auto tf = exact_targets_file(train_ds, 5);
      TrainConfig cfg;
      cfg.kind = ModelKind::v2vsls;
      cfg.seed = seed;
      cfg.epochs = 12;
      cfg.hidden = 64;
      cfg.alpha = 3.0;
      cfg.lambda = 1.3;
      cfg.patience = 0;
      const auto ckpt = knnseq::train(train_ds, tf, cfg).checkpoint;

      knnseq::OversampleConfig ocfg;
      ocfg.method = knnseq::OversampleMethod::model;
      ocfg.seed = seed;
      const Dataset augmented = knnseq::generate_synthetic_model(ckpt, train_ds, ocfg).combined();

      const auto pre = knnseq::baseline_knn_classify(train_ds, test_ds, 5, knnseq::KnnMode::full);
      const auto post = knnseq::baseline_knn_classify(augmented, test_ds, 5, knnseq::KnnMode::full);
      pre_total += minority_f1(pre, 1);
      post_total += minority_f1(post, 1);
    }
    ctx.require(post_total >= pre_total,
                "minority F1 dropped from " + std::to_string(pre_total / 3.0) + " to " +
                    std::to_string(post_total / 3.0));
  }

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "collinear, allocation bounded, minority F1 %.4f -> %.4f, %.0fs", pre_total / 3.0,
                post_total / 3.0, watch.seconds());
  detail = ctx.ok ? buf : ctx.detail;
  return ctx.ok;
}

// --------------------------------------------------------------------------
// Criterion 9: determinism and round trips

bool criterion_determinism(std::string& detail) {
  Stopwatch watch;
  CheckContext ctx;
  const auto tmp_dir = std::filesystem::temp_directory_path() / "knnseq-acceptance";
  std::filesystem::create_directories(tmp_dir);

  auto train_ds = testutil::two_gaussians(300, 4, 3.0, 0.4, 9001);
  auto test_ds = testutil::two_gaussians(100, 4, 3.0, 0.4, 9002);

  // targets files
  const auto tf = exact_targets_file(train_ds, 5);
  const std::string t_a = (tmp_dir / "det_a.knnt").string();
  const std::string t_b = (tmp_dir / "det_b.knnt").string();
  knnseq::write_targets(tf, t_a);
  knnseq::write_targets(exact_targets_file(train_ds, 5, 2), t_b);
  ctx.require(testutil::read_file_bytes(t_a) == testutil::read_file_bytes(t_b),
              "targets files differ across runs/workers");

  // checkpoints
  TrainConfig cfg;
  cfg.kind = ModelKind::v2vsls;
  cfg.seed = 77;
  cfg.epochs = 4;
  cfg.hidden = 16;
  cfg.patience = 0;
  const std::string c_a = (tmp_dir / "det_a.ckpt").string();
  const std::string c_b = (tmp_dir / "det_b.ckpt").string();
  knnseq::save_checkpoint(knnseq::train(train_ds, tf, cfg).checkpoint, c_a);
  knnseq::save_checkpoint(knnseq::train(train_ds, tf, cfg).checkpoint, c_b);
  ctx.require(testutil::read_file_bytes(c_a) == testutil::read_file_bytes(c_b),
              "checkpoints differ across identical runs");

  // save -> load -> predict equals in-memory predictions
  const auto ckpt = knnseq::train(train_ds, tf, cfg).checkpoint;
  const std::string c_c = (tmp_dir / "det_c.ckpt").string();
  knnseq::save_checkpoint(ckpt, c_c);
  const auto loaded = knnseq::load_checkpoint(c_c);
  knnseq::Predictor in_memory(ckpt, &train_ds);
  knnseq::Predictor from_disk(loaded, &train_ds);
  ctx.require(in_memory.predict_batch(test_ds) == from_disk.predict_batch(test_ds),
              "save/load changed predictions");

  // metric outputs
  knnseq::EvalOptions opts;
  opts.seed = 3;
  const auto m_a = knnseq::evaluate_checkpoint(ckpt, test_ds, &train_ds, opts);
  opts.threads = 2;
  const auto m_b = knnseq::evaluate_checkpoint(loaded, test_ds, &train_ds, opts);
  ctx.require(knnseq::metrics_json(m_a, ckpt.label_map) == knnseq::metrics_json(m_b, ckpt.label_map),
              "metric outputs differ");

  for (const auto& p : {t_a, t_b, c_a, c_b, c_c}) std::filesystem::remove(p);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "bit-identical files and predictions, %.0fs", watch.seconds());
  detail = ctx.ok ? buf : ctx.detail;
  return ctx.ok;
}

struct Criterion {
  int number;
  const char* name;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[i + 1]);
    }
  }

  const std::vector<Criterion> criteria{
      {1, "gradient oracle suite", criterion_gradients},
      {2, "kNN oracle equivalence (exhaustive OOC == exact)", criterion_ooc_equivalence},
      {3, "OOC recall monotone in R with >= 0.1 gain", criterion_recall_monotonic},
      {4, "desk-scale classification: v2vsls beats full kNN by >= 2 points",
       criterion_desk_scale},
      {5, "OOC kNN baseline scores strictly below full kNN", criterion_ooc_baseline_degrades},
      {6, "OOC preparation saves >= 20% wall time at 100k x 100", criterion_prep_time},
      {7, "swapped-rank training does not beat the original order", criterion_swap_ablation},
      {8, "oversampler properties (collinearity, allocation, minority F1)",
       criterion_oversampler},
      {9, "determinism and bit-exact round trips", criterion_determinism},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (only != 0 && criterion.number != only) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = criterion.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", criterion.number,
                criterion.name, detail.c_str());
    std::fflush(stdout);
    failures += ok ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
