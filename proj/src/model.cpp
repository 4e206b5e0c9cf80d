#include "knnseq/model.hpp"

#include <stdexcept>

namespace knnseq {

using diff::Tensor;

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::v2ls: return "v2ls";
    case ModelKind::v2vs: return "v2vs";
    case ModelKind::v2vsls: return "v2vsls";
    case ModelKind::mnknn: return "mnknn";
    case ModelKind::mnknn_vec: return "mnknn-vec";
  }
  throw std::logic_error("to_string: unknown model kind");
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "v2ls") return ModelKind::v2ls;
  if (name == "v2vs") return ModelKind::v2vs;
  if (name == "v2vsls") return ModelKind::v2vsls;
  if (name == "mnknn") return ModelKind::mnknn;
  if (name == "mnknn-vec" || name == "mnknn_vec") return ModelKind::mnknn_vec;
  throw std::invalid_argument("unknown model kind '" + name +
                              "' (expected v2ls, v2vs, v2vsls, mnknn or mnknn-vec)");
}

bool kind_has_label_head(ModelKind kind) { return kind != ModelKind::v2vs; }

bool kind_has_vector_head(ModelKind kind) {
  return kind == ModelKind::v2vs || kind == ModelKind::v2vsls || kind == ModelKind::mnknn_vec;
}

bool kind_is_memnet(ModelKind kind) {
  return kind == ModelKind::mnknn || kind == ModelKind::mnknn_vec;
}

Tensor onehot_rows(const std::vector<int>& classes, std::size_t num_classes) {
  std::vector<double> values(classes.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const int c = classes[i];
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
      throw std::invalid_argument("onehot_rows: class " + std::to_string(c) + " out of range [0, " +
                                  std::to_string(num_classes) + ")");
    }
    values[i * num_classes + static_cast<std::size_t>(c)] = 1.0;
  }
  return Tensor({classes.size(), num_classes}, std::move(values));
}

BatchTargets make_batch_targets(const NeighborTargets& targets, const std::vector<int>& gt_labels,
                                const std::vector<std::size_t>& batch_indices,
                                std::size_t num_classes) {
  const std::size_t m = batch_indices.size();
  const std::size_t k = targets.k;
  const std::size_t d = targets.d;
  BatchTargets bt;
  bt.batch_size = m;
  std::vector<int> step_classes(m);
  std::vector<int> gt(m);
  for (std::size_t t = 0; t < k; ++t) {
    std::vector<double> vecs(m * d);
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t i = batch_indices[r];
      step_classes[r] = targets.labels_of(i)[t];
      const double* src = targets.vector_of(i, t);
      std::copy(src, src + d, vecs.begin() + r * d);
    }
    bt.step_label_onehots.push_back(onehot_rows(step_classes, num_classes));
    bt.step_vectors.push_back(Tensor({m, d}, std::move(vecs)));
  }
  for (std::size_t r = 0; r < m; ++r) {
    gt[r] = gt_labels[batch_indices[r]];
  }
  bt.gt_onehot = onehot_rows(gt, num_classes);
  return bt;
}

Tensor label_sequence_loss(const PredictionBundle& bundle, const BatchTargets& targets,
                           double alpha) {
  if (bundle.step_labels.empty() || !bundle.final_label.defined()) {
    throw std::invalid_argument("label_sequence_loss: bundle has no label outputs");
  }
  if (targets.step_label_onehots.size() != bundle.step_labels.size()) {
    throw std::invalid_argument("label_sequence_loss: bundle has " +
                                std::to_string(bundle.step_labels.size()) + " steps, targets " +
                                std::to_string(targets.step_label_onehots.size()));
  }
  const std::size_t k = bundle.step_labels.size();
  Tensor per_sample;
  for (std::size_t t = 0; t < k; ++t) {
    Tensor klt = diff::kl_divergence(targets.step_label_onehots[t], bundle.step_labels[t]);
    per_sample = t == 0 ? klt : diff::add(per_sample, klt);
  }
  per_sample = diff::scale(per_sample, 1.0 / static_cast<double>(k));
  if (alpha != 0.0) {
    Tensor gt_term = diff::kl_divergence(targets.gt_onehot, bundle.final_label);
    per_sample = diff::add(per_sample, diff::scale(gt_term, alpha));
  }
  return diff::mean_all(per_sample);
}

Tensor vector_sequence_loss(const PredictionBundle& bundle, const BatchTargets& targets) {
  if (bundle.step_vectors.empty()) {
    throw std::invalid_argument("vector_sequence_loss: bundle has no vector outputs");
  }
  if (targets.step_vectors.size() != bundle.step_vectors.size()) {
    throw std::invalid_argument("vector_sequence_loss: bundle has " +
                                std::to_string(bundle.step_vectors.size()) + " steps, targets " +
                                std::to_string(targets.step_vectors.size()));
  }
  Tensor per_sample;
  for (std::size_t t = 0; t < bundle.step_vectors.size(); ++t) {
    Tensor sq = diff::squared_l2(bundle.step_vectors[t], targets.step_vectors[t]);
    per_sample = t == 0 ? sq : diff::add(per_sample, sq);
  }
  return diff::mean_all(per_sample);
}

}  // namespace knnseq
