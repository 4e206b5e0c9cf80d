#pragma once

#include <array>
#include <string>
#include <vector>

#include "knnseq/dataset.hpp"

namespace knnseq {

struct Projection {
  std::vector<double> coords;  // n x 2, row-major
  std::array<std::vector<double>, 2> components;
  std::array<double, 2> eigenvalues{0.0, 0.0};
};

// Top-2 principal components via power iteration with deflation on the
// covariance of the centered features. Component signs are normalized so
// the largest-magnitude entry is positive.
Projection project_2d(const std::vector<double>& features, std::size_t n, std::size_t d,
                      double tol = 1e-9, std::size_t max_iterations = 100000);

Projection project_2d(const Dataset& ds, double tol = 1e-9);

// CSV with pc1, pc2, the original label and (when present) the origin.
void write_projection_csv(const Projection& proj, const Dataset& ds, const std::string& path);

}  // namespace knnseq
