#pragma once

#include <string>
#include <vector>

#include "knnseq/knn.hpp"
#include "knnseq/ops.hpp"
#include "knnseq/tensor.hpp"

namespace knnseq {

enum class ModelKind { v2ls, v2vs, v2vsls, mnknn, mnknn_vec };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// v2vs carries no label head: its loss never touches labels, so label
// outputs would be untrained noise. Every other kind emits K label
// distributions plus their average.
bool kind_has_label_head(ModelKind kind);
bool kind_has_vector_head(ModelKind kind);
bool kind_is_memnet(ModelKind kind);

// Forward outputs for one batch. `step_labels[t]` and `step_vectors[t]` are
// m x C / m x d; `final_label` is the elementwise mean of the step labels.
struct PredictionBundle {
  diff::Tensor final_label;
  std::vector<diff::Tensor> step_labels;
  std::vector<diff::Tensor> step_vectors;
};

// Constant per-batch training targets: one-hot neighbor labels and neighbor
// vectors per step, plus the one-hot ground truth.
struct BatchTargets {
  std::vector<diff::Tensor> step_label_onehots;  // K tensors, m x C
  std::vector<diff::Tensor> step_vectors;        // K tensors, m x d
  diff::Tensor gt_onehot;                        // m x C
  std::size_t batch_size = 0;
};

diff::Tensor onehot_rows(const std::vector<int>& classes, std::size_t num_classes);

BatchTargets make_batch_targets(const NeighborTargets& targets, const std::vector<int>& gt_labels,
                                const std::vector<std::size_t>& batch_indices,
                                std::size_t num_classes);

// (1/K) sum_t KL(Y^T_t || Y^P_t) + alpha * KL(Y^GT || Y^P), averaged over
// the batch.
diff::Tensor label_sequence_loss(const PredictionBundle& bundle, const BatchTargets& targets,
                                 double alpha);

// sum_t ||X^P_t - X^T_t||^2, averaged over the batch.
diff::Tensor vector_sequence_loss(const PredictionBundle& bundle, const BatchTargets& targets);

}  // namespace knnseq
