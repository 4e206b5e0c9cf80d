#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "knnseq/dataset.hpp"
#include "knnseq/knn.hpp"
#include "knnseq/oversample.hpp"
#include "knnseq/pca.hpp"
#include "knnseq/targets_io.hpp"
#include "knnseq/train.hpp"

namespace {

using knnseq::Dataset;
using knnseq::DatasetFormat;

struct CommonIo {
  std::string data;
  std::string format = "csv";
  std::size_t dim = 0;  // libsvm minimum dimension
};

DatasetFormat parse_format(const std::string& name) {
  if (name == "csv") return DatasetFormat::csv;
  if (name == "libsvm") return DatasetFormat::libsvm;
  throw CLI::ValidationError("--format", "expected 'csv' or 'libsvm'");
}

Dataset load(const CommonIo& io) {
  return knnseq::load_dataset(io.data, parse_format(io.format), io.dim);
}

void add_io_flags(CLI::App* cmd, CommonIo& io, const std::string& data_desc) {
  cmd->add_option("--data", io.data, data_desc)->required();
  cmd->add_option("--format", io.format, "dataset format: csv or libsvm (default csv)");
  cmd->add_option("--dim", io.dim, "minimum feature dimension for libsvm files");
}

class ConfigEcho {
 public:
  void add(const std::string& key, const std::string& value) {
    lines_ += "  " + key + ": " + value + "\n";
  }
  void add(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", value);
    add(key, std::string(buf));
  }
  void add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }
  void add(const std::string& key, int value) { add(key, std::to_string(value)); }
  void print(const std::string& command) const {
    std::printf("%s config:\n%s", command.c_str(), lines_.c_str());
    std::fflush(stdout);
  }

 private:
  std::string lines_;
};

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path + "'");
  }
  out << content;
}

void write_timing_json(const std::string& out_path, double prep_seconds, double train_seconds) {
  nlohmann::ordered_json j;
  j["prep_seconds"] = prep_seconds;
  j["train_seconds"] = train_seconds;
  write_text_file(out_path + ".timing.json", j.dump(2) + "\n");
}

void emit_metrics(const knnseq::Metrics& metrics, const std::vector<std::int64_t>& label_map,
                  const std::string& out_path) {
  const std::string report = knnseq::metrics_report(metrics, label_map);
  std::fputs(report.c_str(), stdout);
  std::fflush(stdout);
  if (!out_path.empty()) {
    write_text_file(out_path, knnseq::metrics_json(metrics, label_map));
  }
}

knnseq::ModelKind parse_model(const std::string& name) {
  try {
    return knnseq::model_kind_from_string(name);
  } catch (const std::invalid_argument& e) {
    throw CLI::ValidationError("--model", e.what());
  }
}

struct HyperFlags {
  std::string model = "v2vsls";
  std::size_t k = 5;
  double tau = 0.85;
  double alpha = 9.5;
  double lambda = 0.12;
  double lr = 0.01;
  int epochs = 30;
  int minibatch = 32;
  double dropout = 0.2;
  std::size_t hidden = 128;
  std::size_t memory_size = 64;
  std::size_t embed_dim = 64;
  std::string feed = "predicted";
  double val_fraction = 0.1;
  int patience = 5;
};

void add_hyper_flags(CLI::App* cmd, HyperFlags& h) {
  cmd->add_option("--model", h.model, "v2ls, v2vs, v2vsls, mnknn or mnknn-vec (default v2vsls)");
  cmd->add_option("--k", h.k, "neighbors / decoder steps / hops (default 5)");
  cmd->add_option("--tau", h.tau, "softmax temperature (default 0.85)");
  cmd->add_option("--alpha", h.alpha, "ground-truth loss weight (default 9.5)");
  cmd->add_option("--lambda", h.lambda, "vector loss weight (default 0.12)");
  cmd->add_option("--lr", h.lr, "Adam learning rate (default 0.01)");
  cmd->add_option("--epochs", h.epochs, "training epochs (default 30)");
  cmd->add_option("--minibatch", h.minibatch, "minibatch size (default 32)");
  cmd->add_option("--dropout", h.dropout, "dropout rate (default 0.2)");
  cmd->add_option("--hidden", h.hidden, "LSTM hidden size (default 128)");
  cmd->add_option("--memory-size", h.memory_size, "memory slots n (default 64)");
  cmd->add_option("--embed-dim", h.embed_dim, "memory embedding size e (default 64)");
  cmd->add_option("--feed", h.feed, "decoder feed: predicted or teacher (default predicted)");
  cmd->add_option("--val-fraction", h.val_fraction, "held-out fraction for early stopping");
  cmd->add_option("--patience", h.patience, "early-stop patience in epochs (default 5; 0 disables)");
}

int run_prepare(const CommonIo& io, const std::string& out, const std::string& mode,
                std::size_t k, std::size_t batch, std::size_t rounds, std::uint64_t seed,
                int threads) {
  ConfigEcho echo;
  echo.add("data", io.data);
  echo.add("format", io.format);
  echo.add("out", out);
  echo.add("mode", mode);
  echo.add("k", k);
  if (mode == "ooc") {
    echo.add("batch", batch);
    echo.add("rounds", rounds);
  }
  echo.add("seed", static_cast<std::size_t>(seed));
  echo.add("threads", threads);
  echo.print("prepare");

  const Dataset ds = load(io);
  const knnseq::NormStats stats = knnseq::normalize_fit(ds);
  const knnseq::NeighborIndex index = knnseq::NeighborIndex::build(ds, stats);

  knnseq::TargetsFile tf;
  tf.stats = stats;
  tf.label_map = ds.label_map;
  const auto start = std::chrono::steady_clock::now();
  if (mode == "full") {
    tf.targets = knnseq::exact_targets(index, k, threads);
  } else {
    knnseq::OocConfig cfg;
    cfg.batch = batch;
    cfg.rounds = rounds;
    cfg.seed = seed;
    tf.targets = knnseq::ooc_targets(index, k, cfg, threads);
  }
  const double prep_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  knnseq::write_targets(tf, out);
  std::printf("targets: %zu samples, k=%zu, d=%zu\nprep_seconds: %.3f\n", tf.targets.n,
              tf.targets.k, tf.targets.d, prep_seconds);
  write_timing_json(out, prep_seconds, 0.0);
  return 0;
}

int run_train(const CommonIo& io, const std::string& targets_path, const std::string& out,
              const std::string& mode, const HyperFlags& h, std::size_t batch, std::size_t rounds,
              std::uint64_t seed, int threads) {
  knnseq::TrainConfig cfg;
  cfg.kind = parse_model(h.model);
  cfg.epochs = h.epochs;
  cfg.minibatch = h.minibatch;
  cfg.lr = h.lr;
  cfg.dropout = h.dropout;
  cfg.seed = seed;
  cfg.tau = h.tau;
  cfg.alpha = h.alpha;
  cfg.lambda = h.lambda;
  cfg.k = h.k;
  cfg.hidden = h.hidden;
  cfg.memory_slots = h.memory_size;
  cfg.embed_dim = h.embed_dim;
  cfg.val_fraction = h.val_fraction;
  cfg.patience = h.patience;
  cfg.threads = threads;
  cfg.verbose = true;
  if (h.feed == "teacher") {
    cfg.feed = knnseq::FeedMode::teacher_forced;
  } else if (h.feed != "predicted") {
    throw CLI::ValidationError("--feed", "expected 'predicted' or 'teacher'");
  }

  ConfigEcho echo;
  echo.add("data", io.data);
  echo.add("format", io.format);
  echo.add("out", out);
  echo.add("mode", mode);
  echo.add("model", h.model);
  echo.add("k", h.k);
  echo.add("tau", h.tau);
  echo.add("alpha", h.alpha);
  echo.add("lambda", h.lambda);
  echo.add("lr", h.lr);
  echo.add("epochs", h.epochs);
  echo.add("minibatch", h.minibatch);
  echo.add("dropout", h.dropout);
  if (knnseq::kind_is_memnet(cfg.kind)) {
    echo.add("memory-size", h.memory_size);
    echo.add("embed-dim", h.embed_dim);
  } else {
    echo.add("hidden", h.hidden);
    echo.add("feed", h.feed);
  }
  if (mode == "ooc") {
    echo.add("batch", batch);
    echo.add("rounds", rounds);
  } else {
    echo.add("targets", targets_path);
  }
  echo.add("val-fraction", h.val_fraction);
  echo.add("patience", h.patience);
  echo.add("seed", static_cast<std::size_t>(seed));
  echo.add("threads", threads);
  echo.print("train");

  const Dataset ds = load(io);
  knnseq::TrainResult result;
  if (mode == "full") {
    cfg.mode = knnseq::TrainMode::full;
    const knnseq::TargetsFile tf = knnseq::read_targets(targets_path);
    result = knnseq::train(ds, tf, cfg);
  } else {
    cfg.mode = knnseq::TrainMode::ooc;
    cfg.ooc.batch = batch;
    cfg.ooc.rounds = rounds;
    cfg.ooc.seed = seed;
    result = knnseq::train_ooc(ds, cfg);
  }
  knnseq::save_checkpoint(result.checkpoint, out);
  std::printf("epochs_run: %d\nprep_seconds: %.3f\ntrain_seconds: %.3f\ncheckpoint: %s\n",
              result.epochs_run, result.prep_seconds, result.train_seconds, out.c_str());
  write_timing_json(out, result.prep_seconds, result.train_seconds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kNN-mimicking sequence and memory models"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "generate neighbor targets for a training set");
  CommonIo prep_io;
  std::string prep_out, prep_mode = "full";
  std::size_t prep_k = 5, prep_batch = 64, prep_rounds = 50;
  std::uint64_t prep_seed = 0;
  int prep_threads = 0;
  add_io_flags(prepare, prep_io, "training dataset");
  prepare->add_option("--out", prep_out, "output targets file")->required();
  prepare->add_option("--mode", prep_mode, "full or ooc (default full)");
  prepare->add_option("--k", prep_k, "neighbors per sample (default 5)");
  auto* prep_batch_opt = prepare->add_option("--batch", prep_batch, "OOC batch capacity B (default 64)");
  auto* prep_rounds_opt = prepare->add_option("--rounds", prep_rounds, "OOC rounds R (default 50)");
  prepare->add_option("--seed", prep_seed, "random seed (default 0)");
  prepare->add_option("--threads", prep_threads, "worker threads (default: hardware)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  CommonIo train_io;
  std::string train_targets, train_out, train_mode = "full";
  HyperFlags train_h;
  std::size_t train_batch = 64, train_rounds = 50;
  std::uint64_t train_seed = 0;
  int train_threads = 0;
  add_io_flags(train_cmd, train_io, "training dataset");
  auto* train_targets_opt =
      train_cmd->add_option("--targets", train_targets, "targets file from 'prepare' (full mode)");
  train_cmd->add_option("--out", train_out, "output checkpoint file")->required();
  train_cmd->add_option("--mode", train_mode, "full or ooc (default full)");
  add_hyper_flags(train_cmd, train_h);
  auto* train_batch_opt =
      train_cmd->add_option("--batch", train_batch, "OOC batch capacity B (default 64)");
  auto* train_rounds_opt =
      train_cmd->add_option("--rounds", train_rounds, "OOC rounds R (default 50)");
  train_cmd->add_option("--seed", train_seed, "random seed (default 0)");
  train_cmd->add_option("--threads", train_threads, "worker threads (default: hardware)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
  std::string eval_ckpt, eval_test, eval_train_data, eval_out, eval_format = "csv";
  std::size_t eval_dim = 0;
  std::uint64_t eval_seed = 0;
  int eval_draws = 1, eval_threads = 0;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "trained model checkpoint")->required();
  eval_cmd->add_option("--test", eval_test, "test dataset")->required();
  eval_cmd->add_option("--train-data", eval_train_data,
                       "training dataset (required for v2vs and memory models)");
  eval_cmd->add_option("--format", eval_format, "dataset format (default csv)");
  eval_cmd->add_option("--dim", eval_dim, "minimum feature dimension for libsvm files");
  eval_cmd->add_option("--out", eval_out, "metrics output file (json)");
  eval_cmd->add_option("--seed", eval_seed, "run seed for evaluation memory draws");
  eval_cmd->add_option("--memory-draws", eval_draws,
                       "memory draws averaged per query (default 1)");
  eval_cmd->add_option("--threads", eval_threads, "worker threads (default: hardware)");

  // baseline-knn
  auto* baseline = app.add_subcommand("baseline-knn", "plain kNN classification baseline");
  std::string base_train, base_test, base_out, base_format = "csv", base_mode = "full";
  std::size_t base_dim = 0, base_k = 5, base_batch = 64, base_rounds = 50;
  std::uint64_t base_seed = 0;
  int base_threads = 0;
  baseline->add_option("--train", base_train, "training dataset")->required();
  baseline->add_option("--test", base_test, "test dataset")->required();
  baseline->add_option("--format", base_format, "dataset format (default csv)");
  baseline->add_option("--dim", base_dim, "minimum feature dimension for libsvm files");
  baseline->add_option("--out", base_out, "metrics output file (json)");
  baseline->add_option("--mode", base_mode, "full or ooc (default full)");
  baseline->add_option("--k", base_k, "neighbors (default 5)");
  auto* base_batch_opt = baseline->add_option("--batch", base_batch, "OOC batch capacity B");
  auto* base_rounds_opt = baseline->add_option("--rounds", base_rounds, "OOC rounds R");
  baseline->add_option("--seed", base_seed, "random seed (default 0)");
  baseline->add_option("--threads", base_threads, "worker threads (default: hardware)");

  // oversample
  auto* over = app.add_subcommand("oversample", "augment a dataset with synthetic minority rows");
  CommonIo over_io;
  std::string over_out, over_method = "model", over_ckpt;
  std::size_t over_k = 5, over_smote_k = 5;
  double over_ratio = 1.0;
  std::uint64_t over_seed = 0;
  add_io_flags(over, over_io, "training dataset");
  over->add_option("--out", over_out, "output augmented csv")->required();
  over->add_option("--method", over_method, "model, smote or adasyn (default model)");
  over->add_option("--checkpoint", over_ckpt, "trained v2vsls/mnknn-vec checkpoint (model method)");
  over->add_option("--k", over_k, "synthetic candidates per source (default 5)");
  over->add_option("--smote-k", over_smote_k, "neighbor count for smote/adasyn (default 5)");
  over->add_option("--balance-ratio", over_ratio, "target count as a fraction of the majority");
  over->add_option("--seed", over_seed, "random seed (default 0)");

  // ablate-swap
  auto* swap_cmd = app.add_subcommand("ablate-swap", "swap two neighbor ranks in a targets file");
  std::string swap_in, swap_out;
  std::size_t swap_i = 1, swap_j = 3;
  swap_cmd->add_option("--targets", swap_in, "input targets file")->required();
  swap_cmd->add_option("--out", swap_out, "output targets file")->required();
  swap_cmd->add_option("--i", swap_i, "first rank, 1-based (default 1)");
  swap_cmd->add_option("--j", swap_j, "second rank, 1-based (default 3)");

  // project
  auto* project = app.add_subcommand("project", "2-D PCA projection of a dataset");
  CommonIo proj_io;
  std::string proj_out;
  double proj_tol = 1e-9;
  add_io_flags(project, proj_io, "dataset to project");
  project->add_option("--out", proj_out, "output coordinates csv")->required();
  project->add_option("--tol", proj_tol, "power-iteration tolerance (default 1e-9)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      if (prep_mode != "full" && prep_mode != "ooc") {
        throw std::invalid_argument("--mode must be 'full' or 'ooc'");
      }
      if (prep_mode == "full" && (prep_batch_opt->count() > 0 || prep_rounds_opt->count() > 0)) {
        throw std::invalid_argument("--batch/--rounds only apply to --mode ooc");
      }
      return run_prepare(prep_io, prep_out, prep_mode, prep_k, prep_batch, prep_rounds, prep_seed,
                         prep_threads);
    }
    if (train_cmd->parsed()) {
      if (train_mode != "full" && train_mode != "ooc") {
        throw std::invalid_argument("--mode must be 'full' or 'ooc'");
      }
      if (train_mode == "full" &&
          (train_batch_opt->count() > 0 || train_rounds_opt->count() > 0)) {
        throw std::invalid_argument("--batch/--rounds only apply to --mode ooc");
      }
      if (train_mode == "full" && train_targets_opt->count() == 0) {
        throw std::invalid_argument("--mode full requires --targets (run 'prepare' first)");
      }
      if (train_mode == "ooc" && train_targets_opt->count() > 0) {
        throw std::invalid_argument("--targets conflicts with --mode ooc (targets are refreshed "
                                    "in-stream)");
      }
      return run_train(train_io, train_targets, train_out, train_mode, train_h, train_batch,
                       train_rounds, train_seed, train_threads);
    }
    if (eval_cmd->parsed()) {
      ConfigEcho echo;
      echo.add("checkpoint", eval_ckpt);
      echo.add("test", eval_test);
      if (!eval_train_data.empty()) echo.add("train-data", eval_train_data);
      echo.add("format", eval_format);
      if (!eval_out.empty()) echo.add("out", eval_out);
      echo.add("seed", static_cast<std::size_t>(eval_seed));
      echo.add("memory-draws", eval_draws);
      echo.add("threads", eval_threads);
      echo.print("eval");

      const knnseq::Checkpoint ckpt = knnseq::load_checkpoint(eval_ckpt);
      const Dataset test = knnseq::load_dataset(eval_test, parse_format(eval_format), eval_dim);
      Dataset train_ref;
      const Dataset* train_ptr = nullptr;
      if (!eval_train_data.empty()) {
        train_ref = knnseq::load_dataset(eval_train_data, parse_format(eval_format), eval_dim);
        train_ptr = &train_ref;
      }
      knnseq::EvalOptions opts;
      opts.seed = eval_seed;
      opts.memory_draws = eval_draws;
      opts.threads = eval_threads;
      const knnseq::Metrics metrics = knnseq::evaluate_checkpoint(ckpt, test, train_ptr, opts);
      emit_metrics(metrics, ckpt.label_map, eval_out);
      return 0;
    }
    if (baseline->parsed()) {
      if (base_mode != "full" && base_mode != "ooc") {
        throw std::invalid_argument("--mode must be 'full' or 'ooc'");
      }
      if (base_mode == "full" && (base_batch_opt->count() > 0 || base_rounds_opt->count() > 0)) {
        throw std::invalid_argument("--batch/--rounds only apply to --mode ooc");
      }
      ConfigEcho echo;
      echo.add("train", base_train);
      echo.add("test", base_test);
      echo.add("mode", base_mode);
      echo.add("k", base_k);
      if (base_mode == "ooc") {
        echo.add("batch", base_batch);
        echo.add("rounds", base_rounds);
      }
      echo.add("seed", static_cast<std::size_t>(base_seed));
      echo.print("baseline-knn");

      const Dataset train_ds =
          knnseq::load_dataset(base_train, parse_format(base_format), base_dim);
      const Dataset test_ds = knnseq::load_dataset(base_test, parse_format(base_format), base_dim);
      knnseq::OocConfig ooc;
      ooc.batch = base_batch;
      ooc.rounds = base_rounds;
      ooc.seed = base_seed;
      const knnseq::Metrics metrics = knnseq::baseline_knn_classify(
          train_ds, test_ds, base_k,
          base_mode == "full" ? knnseq::KnnMode::full : knnseq::KnnMode::ooc, ooc, base_threads);
      emit_metrics(metrics, train_ds.label_map, base_out);
      return 0;
    }
    if (over->parsed()) {
      ConfigEcho echo;
      echo.add("data", over_io.data);
      echo.add("out", over_out);
      echo.add("method", over_method);
      if (!over_ckpt.empty()) echo.add("checkpoint", over_ckpt);
      echo.add("k", over_k);
      echo.add("smote-k", over_smote_k);
      echo.add("balance-ratio", over_ratio);
      echo.add("seed", static_cast<std::size_t>(over_seed));
      echo.print("oversample");

      const Dataset ds = load(over_io);
      knnseq::OversampleConfig cfg;
      cfg.method = knnseq::oversample_method_from_string(over_method);
      cfg.k = over_k;
      cfg.smote_k = over_smote_k;
      cfg.seed = over_seed;
      cfg.balance_ratio = over_ratio;
      knnseq::Checkpoint ckpt;
      const knnseq::Checkpoint* ckpt_ptr = nullptr;
      if (cfg.method == knnseq::OversampleMethod::model) {
        if (over_ckpt.empty()) {
          throw std::invalid_argument("--method model requires --checkpoint");
        }
        ckpt = knnseq::load_checkpoint(over_ckpt);
        ckpt_ptr = &ckpt;
      }
      const knnseq::AugmentedDataset aug = knnseq::oversample(ckpt_ptr, ds, cfg);
      knnseq::save_dataset_csv(aug.combined(), over_out);
      std::printf("synthetic_rows: %zu\naugmented: %s\n", aug.synthetic.size(), over_out.c_str());
      return 0;
    }
    if (swap_cmd->parsed()) {
      ConfigEcho echo;
      echo.add("targets", swap_in);
      echo.add("out", swap_out);
      echo.add("i", swap_i);
      echo.add("j", swap_j);
      echo.print("ablate-swap");

      knnseq::TargetsFile tf = knnseq::read_targets(swap_in);
      tf.targets = knnseq::swap_targets_ablation(std::move(tf.targets), swap_i, swap_j);
      knnseq::write_targets(tf, swap_out);
      std::printf("swapped ranks %zu and %zu for %zu samples\n", swap_i, swap_j, tf.targets.n);
      return 0;
    }
    if (project->parsed()) {
      ConfigEcho echo;
      echo.add("data", proj_io.data);
      echo.add("out", proj_out);
      echo.add("tol", proj_tol);
      echo.print("project");

      const Dataset ds = load(proj_io);
      const knnseq::Projection proj = knnseq::project_2d(ds, proj_tol);
      knnseq::write_projection_csv(proj, ds, proj_out);
      std::printf("projected %zu rows (eigenvalues %.6g, %.6g)\n", ds.n, proj.eigenvalues[0],
                  proj.eigenvalues[1]);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
