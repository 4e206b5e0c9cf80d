#pragma once

#include <utility>
#include <vector>

#include "knnseq/tensor.hpp"

namespace knnseq {

// Bias-corrected Adam over a fixed set of parameter tensors. The update
// order follows the parameter list, so runs are reproducible.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<diff::Tensor> params, double lr = 0.01, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void zero_grad();
  // Applies one update from the accumulated gradients; increments t.
  void step();

  std::size_t t() const { return t_; }

 private:
  std::vector<diff::Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace knnseq
