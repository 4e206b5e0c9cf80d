#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "knnseq/rng.hpp"
#include "knnseq/tensor.hpp"

namespace knnseq::diff {

enum class Mode { train, eval };

enum class Activation { relu, tanh, sigmoid };

// C = alpha * op(A) * op(B) + beta * C, row-major.
// A is (transa ? k x m : m x k), B is (transb ? n x k : k x n), C is m x n.
void gemm(bool transa, bool transb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, const double* b, double beta, double* c);

// out[i,j] = sum_k x[i,k] * w[k,j] + b[j]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
// a (m x p) times b-transposed (b stored n x p) -> m x n
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);

// Elementwise mean of same-shaped tensors.
Tensor mean_of(const std::vector<Tensor>& items);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);

// Repeats a length-q vector as m rows; the adjoint is the column sum.
Tensor broadcast_rows(const Tensor& v, std::size_t m);

Tensor activation(const Tensor& x, Activation kind);

// Row-wise softmax of z / tau with max subtraction.
Tensor softmax_with_temperature(const Tensor& z, double tau);

// Row-wise KL(target || pred); targets are constants. Returns one value per
// row (a scalar tensor for rank-1 inputs). Both arguments must be
// distributions: nonnegative, each row summing to 1 within 1e-6.
Tensor kl_divergence(const Tensor& target, const Tensor& pred, double eps = 1e-12);

// Row-wise squared Euclidean distance; a scalar for rank-1 inputs.
Tensor squared_l2(const Tensor& a, const Tensor& b);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Inverted dropout: train mode zeroes entries with probability `rate` and
// scales survivors by 1/(1-rate); eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, Mode mode, RngStream& rng);

struct BatchNormState {
  Tensor gamma;  // learnable scale, shape [q]
  Tensor beta;   // learnable shift, shape [q]
  std::vector<double> running_mean;
  std::vector<double> running_var;

  static BatchNormState make(std::size_t q);
};

Tensor batch_norm(const Tensor& x, BatchNormState& state, Mode mode,
                  double momentum = 0.1, double eps = 1e-5);

struct LstmParams {
  Tensor w;  // (input_dim + hidden) x 4*hidden, gate order [i f g o]
  Tensor b;  // 4*hidden
  std::size_t input_dim = 0;
  std::size_t hidden = 0;

  static LstmParams make(std::size_t input_dim, std::size_t hidden, RngStream& rng);
};

struct LstmOut {
  Tensor h;
  Tensor c;
};

LstmOut lstm_cell_step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                       const LstmParams& params);

// Values uniform in [-bound, bound].
Tensor uniform_init(std::vector<std::size_t> shape, double bound, RngStream& rng);

}  // namespace knnseq::diff
