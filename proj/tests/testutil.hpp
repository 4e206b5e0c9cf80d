#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "knnseq/dataset.hpp"
#include "knnseq/rng.hpp"
#include "knnseq/tensor.hpp"

namespace testutil {

// Central-difference gradient check. Rebuilds the forward pass per
// evaluation, so dropout and similar ops must derive their streams from
// fixed inputs inside `forward`.
inline double max_grad_rel_error(const std::function<knnseq::diff::Tensor()>& forward,
                                 const std::vector<knnseq::diff::Tensor>& params,
                                 double step = 1e-4, double denom_floor = 1e-2) {
  for (auto p : params) p.zero_grad();
  knnseq::diff::Tensor loss = forward();
  loss.backward();

  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto p = params[pi];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double original = p.values()[j];
      p.values()[j] = original + step;
      const double up = forward().item();
      p.values()[j] = original - step;
      const double down = forward().item();
      p.values()[j] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double ad = analytic[pi][j];
      const double denom = std::max({std::abs(numeric), std::abs(ad), denom_floor});
      worst = std::max(worst, std::abs(numeric - ad) / denom);
    }
  }
  return worst;
}

// Gaussian blobs, one center per class, uniform class sizes.
inline knnseq::Dataset gaussian_blobs(std::size_t n, std::size_t d, std::size_t classes,
                                      double separation, std::uint64_t seed,
                                      double noise = 1.0) {
  knnseq::Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.num_classes = classes;
  ds.features.resize(n * d);
  ds.labels.resize(n);
  for (std::size_t c = 0; c < classes; ++c) ds.label_map.push_back(static_cast<std::int64_t>(c));
  knnseq::RngStream rng = knnseq::RngStream::derive(seed, "gaussian-blobs");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    ds.labels[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < d; ++j) {
      const double center = (j == c % d) ? separation * static_cast<double>(c + 1) : 0.0;
      ds.features[i * d + j] = center + noise * rng.next_gaussian();
    }
  }
  return ds;
}

// Two Gaussian classes with a configurable imbalance ratio
// (minority_fraction of the rows are class 1).
inline knnseq::Dataset two_gaussians(std::size_t n, std::size_t d, double separation,
                                     double minority_fraction, std::uint64_t seed) {
  knnseq::Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.num_classes = 2;
  ds.label_map = {0, 1};
  ds.features.resize(n * d);
  ds.labels.resize(n);
  knnseq::RngStream rng = knnseq::RngStream::derive(seed, "two-gaussians");
  const std::size_t minority = static_cast<std::size_t>(minority_fraction * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_minority = i < minority;
    ds.labels[i] = is_minority ? 1 : 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double center = is_minority ? separation : 0.0;
      ds.features[i * d + j] = center + rng.next_gaussian();
    }
  }
  return ds;
}

inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "knnseq-tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return {};
  std::vector<unsigned char> bytes;
  unsigned char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) {
    bytes.insert(bytes.end(), buf, buf + got);
  }
  std::fclose(f);
  return bytes;
}

}  // namespace testutil
