#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace knnseq {

// Per-feature z-score statistics, fitted on the training split only.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population std; 0 marks a constant feature

  std::size_t dim() const { return mean.size(); }
  void apply(const double* in, double* out) const;
  std::vector<double> apply(const std::vector<double>& x) const;
  // Inverse transform, mapping normalized vectors back to raw feature scale.
  std::vector<double> invert(const std::vector<double>& z) const;
};

enum class DatasetFormat { csv, libsvm };

// N x d feature matrix with integer class labels in {0..C-1}. Labels are
// remapped from the original file values; `label_map[k]` is the original
// label of class k, in ascending original order.
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // row-major n x d
  std::vector<int> labels;
  std::vector<std::int64_t> label_map;
  std::vector<std::string> origins;  // optional; empty when the file has no origin column

  const double* row(std::size_t i) const { return features.data() + i * d; }
  std::vector<double> row_vec(std::size_t i) const;
  std::vector<std::size_t> class_counts() const;
};

Dataset load_dataset(const std::string& path, DatasetFormat format, std::size_t min_dim = 0);

// CSV with a header row, the `label` column holding the original label
// values, and an `origin` column when any row carries one.
void save_dataset_csv(const Dataset& ds, const std::string& path);

NormStats normalize_fit(const Dataset& train);
// Returns a copy of the feature matrix with every row normalized.
std::vector<double> normalize_matrix(const NormStats& stats, const Dataset& ds);

}  // namespace knnseq
