#include "knnseq/oversample.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "knnseq/knn.hpp"
#include "knnseq/model.hpp"
#include "knnseq/rng.hpp"
#include "knnseq/train.hpp"

namespace knnseq {

namespace {

std::vector<std::size_t> balance_targets(const std::vector<std::size_t>& counts, double ratio) {
  if (ratio <= 0.0) {
    throw std::invalid_argument("oversample: balance ratio must be positive");
  }
  const std::size_t majority = *std::max_element(counts.begin(), counts.end());
  std::vector<std::size_t> targets(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    targets[c] = static_cast<std::size_t>(
        std::llround(ratio * static_cast<double>(majority)));
  }
  return targets;
}

bool all_balanced(const std::vector<std::size_t>& counts, const std::vector<std::size_t>& targets) {
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < targets[c]) return false;
  }
  return true;
}

// Per minority class: the member rows (ascending) and each member's
// smote_k nearest same-class neighbors in normalized space.
struct MinorityNeighborhood {
  std::vector<std::size_t> members;
  std::vector<std::vector<std::size_t>> neighbors;  // global indices
};

MinorityNeighborhood class_neighborhood(const Dataset& train, const std::vector<double>& norm,
                                        int class_id, std::size_t smote_k) {
  MinorityNeighborhood out;
  for (std::size_t i = 0; i < train.n; ++i) {
    if (train.labels[i] == class_id) out.members.push_back(i);
  }
  if (out.members.size() < smote_k + 1) {
    throw std::invalid_argument("oversample: class " +
                                std::to_string(train.label_map[class_id]) + " has " +
                                std::to_string(out.members.size()) +
                                " samples; interpolation needs at least " +
                                std::to_string(smote_k + 1));
  }
  std::vector<double> member_feats(out.members.size() * train.d);
  std::vector<int> member_labels(out.members.size(), class_id);
  for (std::size_t r = 0; r < out.members.size(); ++r) {
    const double* src = norm.data() + out.members[r] * train.d;
    std::copy(src, src + train.d, member_feats.begin() + r * train.d);
  }
  NeighborIndex class_index(std::move(member_feats), std::move(member_labels), out.members.size(),
                            train.d);
  out.neighbors.resize(out.members.size());
  for (std::size_t r = 0; r < out.members.size(); ++r) {
    const auto found = class_index.query(class_index.row(r), smote_k, r);
    for (const Neighbor& nb : found) {
      out.neighbors[r].push_back(out.members[nb.index]);
    }
  }
  return out;
}

SyntheticRow interpolate(const Dataset& train, std::size_t source, std::size_t neighbor, double u,
                         int class_id, const char* method) {
  SyntheticRow row;
  row.class_id = class_id;
  row.features.resize(train.d);
  const double* xi = train.row(source);
  const double* xz = train.row(neighbor);
  for (std::size_t j = 0; j < train.d; ++j) {
    row.features[j] = xi[j] + u * (xz[j] - xi[j]);
  }
  row.origin = std::string(method) + ";src=" + std::to_string(source) +
               ";nbr=" + std::to_string(neighbor);
  return row;
}

}  // namespace

std::string to_string(OversampleMethod method) {
  switch (method) {
    case OversampleMethod::model: return "model";
    case OversampleMethod::smote: return "smote";
    case OversampleMethod::adasyn: return "adasyn";
  }
  throw std::logic_error("to_string: unknown oversample method");
}

OversampleMethod oversample_method_from_string(const std::string& name) {
  if (name == "model") return OversampleMethod::model;
  if (name == "smote") return OversampleMethod::smote;
  if (name == "adasyn") return OversampleMethod::adasyn;
  throw std::invalid_argument("unknown oversampling method '" + name +
                              "' (expected model, smote or adasyn)");
}

Dataset AugmentedDataset::combined() const {
  Dataset out = base;
  out.origins.assign(base.n, "original");
  for (const SyntheticRow& row : synthetic) {
    out.features.insert(out.features.end(), row.features.begin(), row.features.end());
    out.labels.push_back(row.class_id);
    out.origins.push_back(row.origin);
  }
  out.n = base.n + synthetic.size();
  return out;
}

AugmentedDataset generate_synthetic_model(const Checkpoint& ckpt, const Dataset& train,
                                          const OversampleConfig& cfg) {
  const ModelKind kind = model_kind_from_string(ckpt.kind);
  if (!kind_has_vector_head(kind) || !kind_has_label_head(kind)) {
    throw std::invalid_argument("oversample: model kind '" + ckpt.kind +
                                "' does not predict labeled vectors (need v2vsls or mnknn-vec)");
  }
  AugmentedDataset out;
  out.base = train;

  std::vector<std::size_t> counts = train.class_counts();
  const std::vector<std::size_t> targets = balance_targets(counts, cfg.balance_ratio);
  if (all_balanced(counts, targets)) {
    return out;
  }
  std::vector<bool> minority(train.num_classes, false);
  for (std::size_t c = 0; c < train.num_classes; ++c) {
    minority[c] = counts[c] < targets[c];
  }

  EvalOptions opts;
  opts.seed = cfg.seed;
  Predictor predictor(ckpt, &train, opts);

  for (std::size_t i = 0; i < train.n && !all_balanced(counts, targets); ++i) {
    if (!minority[static_cast<std::size_t>(train.labels[i])]) continue;
    const PredictionBundle bundle = predictor.predict_bundle(train.row(i), i);
    const std::size_t steps = std::min<std::size_t>(cfg.k, bundle.step_vectors.size());
    for (std::size_t t = 0; t < steps; ++t) {
      const auto& dist = bundle.step_labels[t].values();
      int pred = 0;
      for (std::size_t c = 1; c < train.num_classes; ++c) {
        if (dist[c] > dist[pred]) pred = static_cast<int>(c);
      }
      const auto pc = static_cast<std::size_t>(pred);
      if (counts[pc] >= targets[pc]) continue;
      SyntheticRow row;
      row.class_id = pred;
      row.features = ckpt.stats.invert(bundle.step_vectors[t].values());
      row.origin = "model;src=" + std::to_string(i) + ";t=" + std::to_string(t + 1);
      out.synthetic.push_back(std::move(row));
      counts[pc]++;
      if (all_balanced(counts, targets)) break;
    }
  }
  return out;
}

AugmentedDataset smote(const Dataset& train, const OversampleConfig& cfg) {
  if (cfg.smote_k < 1) {
    throw std::invalid_argument("smote: smote_k must be at least 1");
  }
  AugmentedDataset out;
  out.base = train;
  std::vector<std::size_t> counts = train.class_counts();
  const std::vector<std::size_t> targets = balance_targets(counts, cfg.balance_ratio);
  const NormStats stats = normalize_fit(train);
  const std::vector<double> norm = normalize_matrix(stats, train);

  for (std::size_t c = 0; c < train.num_classes; ++c) {
    if (counts[c] >= targets[c]) continue;
    const MinorityNeighborhood hood =
        class_neighborhood(train, norm, static_cast<int>(c), cfg.smote_k);
    RngStream rng = RngStream::derive(cfg.seed, "smote", c);
    std::size_t cursor = 0;
    while (counts[c] < targets[c]) {
      const std::size_t local = cursor % hood.members.size();
      ++cursor;
      const std::size_t source = hood.members[local];
      const std::size_t neighbor = hood.neighbors[local][rng.next_index(cfg.smote_k)];
      const double u = rng.next_double();
      out.synthetic.push_back(interpolate(train, source, neighbor, u, static_cast<int>(c), "smote"));
      counts[c]++;
    }
  }
  return out;
}

AugmentedDataset adasyn(const Dataset& train, const OversampleConfig& cfg) {
  if (cfg.smote_k < 1) {
    throw std::invalid_argument("adasyn: smote_k must be at least 1");
  }
  AugmentedDataset out;
  out.base = train;
  std::vector<std::size_t> counts = train.class_counts();
  const std::vector<std::size_t> targets = balance_targets(counts, cfg.balance_ratio);
  const NormStats stats = normalize_fit(train);
  const std::vector<double> norm = normalize_matrix(stats, train);
  const NeighborIndex full_index(norm, train.labels, train.n, train.d);

  for (std::size_t c = 0; c < train.num_classes; ++c) {
    if (counts[c] >= targets[c]) continue;
    const std::size_t budget = targets[c] - counts[c];  // G
    const MinorityNeighborhood hood =
        class_neighborhood(train, norm, static_cast<int>(c), cfg.smote_k);

    // r_i: fraction of other-class samples among the smote_k nearest in the
    // whole set.
    std::vector<double> ratio(hood.members.size(), 0.0);
    double ratio_sum = 0.0;
    for (std::size_t r = 0; r < hood.members.size(); ++r) {
      const std::size_t i = hood.members[r];
      const auto found = full_index.query(full_index.row(i), cfg.smote_k, i);
      std::size_t other = 0;
      for (const Neighbor& nb : found) {
        if (train.labels[nb.index] != static_cast<int>(c)) ++other;
      }
      ratio[r] = static_cast<double>(other) / static_cast<double>(cfg.smote_k);
      ratio_sum += ratio[r];
    }
    if (ratio_sum == 0.0) {
      std::fprintf(stderr,
                   "adasyn: class %lld has no boundary samples; falling back to uniform "
                   "allocation\n",
                   static_cast<long long>(train.label_map[c]));
      ratio.assign(hood.members.size(), 1.0);
      ratio_sum = static_cast<double>(hood.members.size());
    }

    for (std::size_t r = 0; r < hood.members.size(); ++r) {
      const std::size_t allocation = static_cast<std::size_t>(
          std::llround(ratio[r] / ratio_sum * static_cast<double>(budget)));
      if (allocation == 0) continue;
      RngStream rng = RngStream::derive(cfg.seed, "adasyn", c, hood.members[r]);
      for (std::size_t g = 0; g < allocation; ++g) {
        const std::size_t neighbor = hood.neighbors[r][rng.next_index(cfg.smote_k)];
        const double u = rng.next_double();
        out.synthetic.push_back(
            interpolate(train, hood.members[r], neighbor, u, static_cast<int>(c), "adasyn"));
        counts[c]++;
      }
    }
  }
  return out;
}

AugmentedDataset oversample(const Checkpoint* ckpt, const Dataset& train,
                            const OversampleConfig& cfg) {
  switch (cfg.method) {
    case OversampleMethod::model:
      if (ckpt == nullptr) {
        throw std::invalid_argument("oversample: the model method needs a checkpoint");
      }
      return generate_synthetic_model(*ckpt, train, cfg);
    case OversampleMethod::smote: return smote(train, cfg);
    case OversampleMethod::adasyn: return adasyn(train, cfg);
  }
  throw std::logic_error("oversample: unknown method");
}

}  // namespace knnseq
