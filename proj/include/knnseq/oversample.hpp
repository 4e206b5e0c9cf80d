#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "knnseq/checkpoint.hpp"
#include "knnseq/dataset.hpp"

namespace knnseq {

enum class OversampleMethod { model, smote, adasyn };

std::string to_string(OversampleMethod method);
OversampleMethod oversample_method_from_string(const std::string& name);

struct OversampleConfig {
  OversampleMethod method = OversampleMethod::model;
  std::size_t k = 5;        // synthetic candidates per source (model method)
  std::size_t smote_k = 5;  // neighbor count for smote/adasyn
  std::uint64_t seed = 0;
  double balance_ratio = 1.0;  // target count per class, as a fraction of the majority
};

struct SyntheticRow {
  std::vector<double> features;  // raw feature scale
  int class_id = 0;
  std::string origin;
};

// Original dataset plus synthetic minority rows. Original rows are never
// modified; synthetic rows carry their provenance in `origin`.
struct AugmentedDataset {
  Dataset base;
  std::vector<SyntheticRow> synthetic;

  Dataset combined() const;
};

// Emits the K predicted out-of-sample vectors of every minority-class
// training sample, in source-index order; a vector is admitted when its
// paired label distribution votes for a class still below the balance
// target, and generation stops once every class reaches it. The model must
// predict both labels and vectors (v2vsls or mnknn-vec).
AugmentedDataset generate_synthetic_model(const Checkpoint& ckpt, const Dataset& train,
                                          const OversampleConfig& cfg);

AugmentedDataset smote(const Dataset& train, const OversampleConfig& cfg);

AugmentedDataset adasyn(const Dataset& train, const OversampleConfig& cfg);

AugmentedDataset oversample(const Checkpoint* ckpt, const Dataset& train,
                            const OversampleConfig& cfg);

}  // namespace knnseq
