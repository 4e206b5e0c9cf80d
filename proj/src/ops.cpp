#include "knnseq/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#ifdef KNNSEQ_USE_BLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int) __attribute__((weak));
#endif

namespace knnseq::diff {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) {
    throw std::invalid_argument(msg);
  }
}

std::shared_ptr<Node> make_node(std::vector<Tensor> parents,
                                std::function<void(const Tensor&)> backward) {
  auto node = std::make_shared<Node>();
  node->parents = std::move(parents);
  node->backward = std::move(backward);
  return node;
}

bool any_requires_grad(const Tensor& a) { return a.requires_grad(); }
bool any_requires_grad(const Tensor& a, const Tensor& b) {
  return a.requires_grad() || b.requires_grad();
}
bool any_requires_grad(const Tensor& a, const Tensor& b, const Tensor& c) {
  return a.requires_grad() || b.requires_grad() || c.requires_grad();
}

void validate_distribution_rows(const Tensor& t, const char* which) {
  const std::size_t m = t.rows();
  const std::size_t c = t.cols();
  const auto& v = t.values();
  for (std::size_t r = 0; r < m; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = v[r * c + j];
      if (p < -1e-12) {
        throw std::invalid_argument(std::string("kl_divergence: ") + which +
                                    " has a negative entry in row " + std::to_string(r));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument(std::string("kl_divergence: ") + which + " row " +
                                  std::to_string(r) + " sums to " + std::to_string(sum) +
                                  ", not 1");
    }
  }
}

}  // namespace

void gemm(bool transa, bool transb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, const double* b, double beta, double* c) {
#ifdef KNNSEQ_USE_BLAS
  static const bool threads_pinned = [] {
    if (openblas_set_num_threads) {
      openblas_set_num_threads(1);
    }
    return true;
  }();
  (void)threads_pinned;
  cblas_dgemm(CblasRowMajor, transa ? CblasTrans : CblasNoTrans,
              transb ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(transa ? m : k), b,
              static_cast<int>(transb ? k : n), beta, c, static_cast<int>(n));
#else
  if (beta == 0.0) {
    std::fill(c, c + m * n, 0.0);
  } else if (beta != 1.0) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] *= beta;
  }
  if (!transa && !transb) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = alpha * a[i * k + p];
        const double* brow = b + p * n;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!transa && transb) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        c[i * n + j] += alpha * acc;
      }
    }
  } else if (transa && !transb) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = a + p * m;
      const double* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = alpha * arow[i];
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        c[i * n + j] += alpha * acc;
      }
    }
  }
#endif
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t m = x.rows();
  const std::size_t p = x.cols();
  require(w.ndim() == 2, "affine: weight must be 2-D, got " + shape_str(w.shape()));
  require(w.shape()[0] == p, "affine: input " + shape_str(x.shape()) + " does not match weight " +
                                 shape_str(w.shape()));
  const std::size_t q = w.shape()[1];
  require(b.size() == q, "affine: bias " + shape_str(b.shape()) + " does not match weight " +
                             shape_str(w.shape()));

  std::vector<double> out(m * q);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy(b.values().begin(), b.values().end(), out.begin() + r * q);
  }
  gemm(false, false, m, q, p, 1.0, x.values().data(), w.values().data(), 1.0, out.data());

  const std::vector<std::size_t> out_shape =
      x.ndim() == 1 ? std::vector<std::size_t>{q} : std::vector<std::size_t>{m, q};
  Tensor result(out_shape, std::move(out), any_requires_grad(x, w, b));
  if (result.requires_grad()) {
    result.set_node(make_node({x, w, b}, [m, p, q](const Tensor& out_t) {
      auto& node = *out_t.node();
      Tensor& xr = node.parents[0];
      Tensor& wr = node.parents[1];
      Tensor& br = node.parents[2];
      const double* g = out_t.grad().data();
      if (xr.requires_grad()) {
        gemm(false, true, m, p, q, 1.0, g, wr.values().data(), 1.0, xr.grad().data());
      }
      if (wr.requires_grad()) {
        gemm(true, false, p, q, m, 1.0, xr.values().data(), g, 1.0, wr.grad().data());
      }
      if (br.requires_grad()) {
        double* bg = br.grad().data();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < q; ++j) bg[j] += g[r * q + j];
        }
      }
    }));
  }
  return result;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows();
  const std::size_t p = a.cols();
  require(b.rows() == p, "matmul: " + shape_str(a.shape()) + " does not match " +
                             shape_str(b.shape()));
  const std::size_t q = b.cols();

  std::vector<double> out(m * q, 0.0);
  gemm(false, false, m, q, p, 1.0, a.values().data(), b.values().data(), 0.0, out.data());
  Tensor result({m, q}, std::move(out), any_requires_grad(a, b));
  if (result.requires_grad()) {
    result.set_node(make_node({a, b}, [m, p, q](const Tensor& out_t) {
      auto& node = *out_t.node();
      Tensor& ar = node.parents[0];
      Tensor& br = node.parents[1];
      const double* g = out_t.grad().data();
      if (ar.requires_grad()) {
        gemm(false, true, m, p, q, 1.0, g, br.values().data(), 1.0, ar.grad().data());
      }
      if (br.requires_grad()) {
        gemm(true, false, p, q, m, 1.0, ar.values().data(), g, 1.0, br.grad().data());
      }
    }));
  }
  return result;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows();
  const std::size_t p = a.cols();
  require(b.cols() == p, "matmul_nt: " + shape_str(a.shape()) + " does not match " +
                             shape_str(b.shape()) + " transposed");
  const std::size_t n = b.rows();

  std::vector<double> out(m * n, 0.0);
  gemm(false, true, m, n, p, 1.0, a.values().data(), b.values().data(), 0.0, out.data());
  Tensor result({m, n}, std::move(out), any_requires_grad(a, b));
  if (result.requires_grad()) {
    result.set_node(make_node({a, b}, [m, p, n](const Tensor& out_t) {
      auto& node = *out_t.node();
      Tensor& ar = node.parents[0];
      Tensor& br = node.parents[1];
      const double* g = out_t.grad().data();
      if (ar.requires_grad()) {
        gemm(false, false, m, p, n, 1.0, g, br.values().data(), 1.0, ar.grad().data());
      }
      if (br.requires_grad()) {
        gemm(true, false, n, p, m, 1.0, g, ar.values().data(), 1.0, br.grad().data());
      }
    }));
  }
  return result;
}

namespace {

Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* name, int sign_b,
                          bool is_mul) {
  require(a.shape() == b.shape(), std::string(name) + ": shape " + shape_str(a.shape()) +
                                      " does not match " + shape_str(b.shape()));
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  if (is_mul) {
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + sign_b * bv[i];
  }
  Tensor result(a.shape(), std::move(out), any_requires_grad(a, b));
  if (result.requires_grad()) {
    result.set_node(make_node({a, b}, [n, sign_b, is_mul](const Tensor& out_t) {
      auto& node = *out_t.node();
      Tensor& ar = node.parents[0];
      Tensor& br = node.parents[1];
      const auto& g = out_t.grad();
      if (ar.requires_grad()) {
        auto& ga = ar.grad();
        if (is_mul) {
          const auto& bv = br.values();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (br.requires_grad()) {
        auto& gb = br.grad();
        if (is_mul) {
          const auto& av = ar.values();
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] += sign_b * g[i];
        }
      }
    }));
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, "add", 1, false); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, "sub", -1, false); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, "mul", 0, true); }

Tensor scale(const Tensor& x, double c) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = c * xv[i];
  Tensor result(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    result.set_node(make_node({x}, [n, c](const Tensor& out_t) {
      Tensor& xr = out_t.node()->parents[0];
      if (!xr.requires_grad()) return;
      const auto& g = out_t.grad();
      auto& gx = xr.grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += c * g[i];
    }));
  }
  return result;
}

Tensor mean_of(const std::vector<Tensor>& items) {
  require(!items.empty(), "mean_of: empty list");
  const std::size_t k = items.size();
  const std::size_t n = items[0].size();
  bool needs_grad = false;
  for (const auto& t : items) {
    require(t.shape() == items[0].shape(), "mean_of: mismatched shapes");
    needs_grad = needs_grad || t.requires_grad();
  }
  std::vector<double> out(n, 0.0);
  for (const auto& t : items) {
    const auto& v = t.values();
    for (std::size_t i = 0; i < n; ++i) out[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(k);
  for (double& v : out) v *= inv;
  Tensor result(items[0].shape(), std::move(out), needs_grad);
  if (needs_grad) {
    result.set_node(make_node(items, [n, inv](const Tensor& out_t) {
      const auto& g = out_t.grad();
      for (Tensor& parent : out_t.node()->parents) {
        if (!parent.requires_grad()) continue;
        auto& gp = parent.grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += inv * g[i];
      }
    }));
  }
  return result;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows();
  require(b.rows() == m, "concat_cols: row counts differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  const std::size_t pa = a.cols();
  const std::size_t pb = b.cols();
  std::vector<double> out(m * (pa + pb));
  for (std::size_t r = 0; r < m; ++r) {
    std::copy(a.values().begin() + r * pa, a.values().begin() + (r + 1) * pa,
              out.begin() + r * (pa + pb));
    std::copy(b.values().begin() + r * pb, b.values().begin() + (r + 1) * pb,
              out.begin() + r * (pa + pb) + pa);
  }
  Tensor result({m, pa + pb}, std::move(out), any_requires_grad(a, b));
  if (result.requires_grad()) {
    result.set_node(make_node({a, b}, [m, pa, pb](const Tensor& out_t) {
      auto& node = *out_t.node();
      Tensor& ar = node.parents[0];
      Tensor& br = node.parents[1];
      const auto& g = out_t.grad();
      const std::size_t q = pa + pb;
      if (ar.requires_grad()) {
        auto& ga = ar.grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < pa; ++j) ga[r * pa + j] += g[r * q + j];
        }
      }
      if (br.requires_grad()) {
        auto& gb = br.grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < pb; ++j) gb[r * pb + j] += g[r * q + pa + j];
        }
      }
    }));
  }
  return result;
}

Tensor broadcast_rows(const Tensor& v, std::size_t m) {
  require(v.ndim() <= 1, "broadcast_rows: expected a vector, got " + shape_str(v.shape()));
  const std::size_t q = v.size();
  std::vector<double> out(m * q);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy(v.values().begin(), v.values().end(), out.begin() + r * q);
  }
  Tensor result({m, q}, std::move(out), v.requires_grad());
  if (result.requires_grad()) {
    result.set_node(make_node({v}, [m, q](const Tensor& out_t) {
      Tensor& vr = out_t.node()->parents[0];
      if (!vr.requires_grad()) return;
      const auto& g = out_t.grad();
      auto& gv = vr.grad();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < q; ++j) gv[j] += g[r * q + j];
      }
    }));
  }
  return result;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  const std::size_t m = x.rows();
  const std::size_t p = x.cols();
  require(start + count <= p, "slice_cols: [" + std::to_string(start) + ", " +
                                  std::to_string(start + count) + ") out of range for " +
                                  shape_str(x.shape()));
  std::vector<double> out(m * count);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy(x.values().begin() + r * p + start, x.values().begin() + r * p + start + count,
              out.begin() + r * count);
  }
  Tensor result({m, count}, std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    result.set_node(make_node({x}, [m, p, start, count](const Tensor& out_t) {
      Tensor& xr = out_t.node()->parents[0];
      if (!xr.requires_grad()) return;
      const auto& g = out_t.grad();
      auto& gx = xr.grad();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < count; ++j) gx[r * p + start + j] += g[r * count + j];
      }
    }));
  }
  return result;
}

Tensor activation(const Tensor& x, Activation kind) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const auto& xv = x.values();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(xv[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
      break;
  }
  Tensor result(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    result.set_node(make_node({x}, [n, kind](const Tensor& out_t) {
      Tensor& xr = out_t.node()->parents[0];
      if (!xr.requires_grad()) return;
      const auto& g = out_t.grad();
      const auto& y = out_t.values();
      const auto& xv = xr.values();
      auto& gx = xr.grad();
      switch (kind) {
        case Activation::relu:
          // derivative at exactly 0 is taken as 0
          for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > 0.0 ? g[i] : 0.0;
          break;
        case Activation::tanh:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
          break;
        case Activation::sigmoid:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
          break;
      }
    }));
  }
  return result;
}

Tensor softmax_with_temperature(const Tensor& z, double tau) {
  require(tau > 0.0, "softmax_with_temperature: tau must be positive, got " + std::to_string(tau));
  const std::size_t m = z.rows();
  const std::size_t c = z.cols();
  require(c >= 1, "softmax_with_temperature: empty rows");
  std::vector<double> out(m * c);
  const auto& zv = z.values();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = zv.data() + r * c;
    double zmax = row[0];
    for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp((row[j] - zmax) / tau);
      out[r * c + j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] *= inv;
  }
  Tensor result(z.shape(), std::move(out), z.requires_grad());
  if (result.requires_grad()) {
    result.set_node(make_node({z}, [m, c, tau](const Tensor& out_t) {
      Tensor& zr = out_t.node()->parents[0];
      if (!zr.requires_grad()) return;
      const auto& g = out_t.grad();
      const auto& p = out_t.values();
      auto& gz = zr.grad();
      for (std::size_t r = 0; r < m; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * p[r * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          gz[r * c + j] += p[r * c + j] * (g[r * c + j] - dot) / tau;
        }
      }
    }));
  }
  return result;
}

Tensor kl_divergence(const Tensor& target, const Tensor& pred, double eps) {
  require(target.shape() == pred.shape(), "kl_divergence: target " + shape_str(target.shape()) +
                                              " does not match pred " + shape_str(pred.shape()));
  require(eps > 0.0, "kl_divergence: eps must be positive");
  if (target.requires_grad()) {
    throw std::logic_error("kl_divergence: gradients with respect to the target are not supported");
  }
  validate_distribution_rows(target, "target");
  validate_distribution_rows(pred, "pred");
  const std::size_t m = target.rows();
  const std::size_t c = target.cols();
  std::vector<double> out(m, 0.0);
  const auto& tv = target.values();
  const auto& pv = pred.values();
  for (std::size_t r = 0; r < m; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double t = tv[r * c + j];
      if (t > 0.0) {
        acc += t * (std::log(t) - std::log(std::max(pv[r * c + j], eps)));
      }
    }
    out[r] = acc;
  }
  const std::vector<std::size_t> out_shape =
      target.ndim() <= 1 ? std::vector<std::size_t>{} : std::vector<std::size_t>{m};
  Tensor result(out_shape, std::move(out), pred.requires_grad());
  if (result.requires_grad()) {
    result.set_node(make_node({target, pred}, [m, c, eps](const Tensor& out_t) {
      auto& node = *out_t.node();
      const Tensor& tr = node.parents[0];
      Tensor& pr = node.parents[1];
      if (!pr.requires_grad()) return;
      const auto& g = out_t.grad();
      const auto& tv = tr.values();
      const auto& pv = pr.values();
      auto& gp = pr.grad();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
          const double t = tv[r * c + j];
          const double p = pv[r * c + j];
          if (t > 0.0 && p > eps) {
            gp[r * c + j] += g[r] * (-t / p);
          }
        }
      }
    }));
  }
  return result;
}

Tensor squared_l2(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "squared_l2: shape " + shape_str(a.shape()) +
                                      " does not match " + shape_str(b.shape()));
  const std::size_t m = a.rows();
  const std::size_t d = a.cols();
  std::vector<double> out(m, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t r = 0; r < m; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = av[r * d + j] - bv[r * d + j];
      acc += diff * diff;
    }
    out[r] = acc;
  }
  const std::vector<std::size_t> out_shape =
      a.ndim() <= 1 ? std::vector<std::size_t>{} : std::vector<std::size_t>{m};
  Tensor result(out_shape, std::move(out), any_requires_grad(a, b));
  if (result.requires_grad()) {
    result.set_node(make_node({a, b}, [m, d](const Tensor& out_t) {
      auto& node = *out_t.node();
      Tensor& ar = node.parents[0];
      Tensor& br = node.parents[1];
      const auto& g = out_t.grad();
      const auto& av = ar.values();
      const auto& bv = br.values();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = 2.0 * (av[r * d + j] - bv[r * d + j]) * g[r];
          if (ar.requires_grad()) ar.grad()[r * d + j] += diff;
          if (br.requires_grad()) br.grad()[r * d + j] -= diff;
        }
      }
    }));
  }
  return result;
}

namespace {

Tensor reduce_all(const Tensor& x, bool mean) {
  const std::size_t n = x.size();
  require(n > 0, "reduce: empty tensor");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double w = mean ? 1.0 / static_cast<double>(n) : 1.0;
  Tensor result = Tensor::scalar(acc * w, x.requires_grad());
  if (result.requires_grad()) {
    result.set_node(make_node({x}, [n, w](const Tensor& out_t) {
      Tensor& xr = out_t.node()->parents[0];
      if (!xr.requires_grad()) return;
      const double g = out_t.grad()[0] * w;
      auto& gx = xr.grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    }));
  }
  return result;
}

}  // namespace

Tensor sum_all(const Tensor& x) { return reduce_all(x, false); }
Tensor mean_all(const Tensor& x) { return reduce_all(x, true); }

Tensor dropout(const Tensor& x, double rate, Mode mode, RngStream& rng) {
  require(rate >= 0.0 && rate < 1.0,
          "dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) {
    return x;
  }
  const std::size_t n = x.size();
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(n);
  std::vector<double> out(n);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = rng.next_double() < rate ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  Tensor result(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    result.set_node(make_node({x}, [n, mask = std::move(mask)](const Tensor& out_t) {
      Tensor& xr = out_t.node()->parents[0];
      if (!xr.requires_grad()) return;
      const auto& g = out_t.grad();
      auto& gx = xr.grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * mask[i];
    }));
  }
  return result;
}

BatchNormState BatchNormState::make(std::size_t q) {
  BatchNormState s;
  s.gamma = Tensor::full({q}, 1.0, true);
  s.beta = Tensor::zeros({q}, true);
  s.running_mean.assign(q, 0.0);
  s.running_var.assign(q, 1.0);
  return s;
}

Tensor batch_norm(const Tensor& x, BatchNormState& state, Mode mode, double momentum, double eps) {
  require(x.ndim() == 2, "batch_norm: input must be 2-D, got " + shape_str(x.shape()));
  const std::size_t m = x.rows();
  const std::size_t q = x.cols();
  require(state.gamma.size() == q && state.beta.size() == q &&
              state.running_mean.size() == q && state.running_var.size() == q,
          "batch_norm: state width does not match input " + shape_str(x.shape()));
  if (mode == Mode::train && m < 2) {
    throw std::invalid_argument("batch_norm: train mode requires a batch of at least 2 rows, got " +
                                std::to_string(m));
  }

  std::vector<double> mean(q, 0.0);
  std::vector<double> var(q, 0.0);
  const auto& xv = x.values();
  if (mode == Mode::train) {
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < q; ++j) mean[j] += xv[r * q + j];
    }
    for (std::size_t j = 0; j < q; ++j) mean[j] /= static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < q; ++j) {
        const double d = xv[r * q + j] - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < q; ++j) var[j] /= static_cast<double>(m);
    for (std::size_t j = 0; j < q; ++j) {
      state.running_mean[j] = (1.0 - momentum) * state.running_mean[j] + momentum * mean[j];
      state.running_var[j] = (1.0 - momentum) * state.running_var[j] + momentum * var[j];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> invstd(q);
  for (std::size_t j = 0; j < q; ++j) invstd[j] = 1.0 / std::sqrt(var[j] + eps);

  std::vector<double> xhat(m * q);
  std::vector<double> out(m * q);
  const auto& gv = state.gamma.values();
  const auto& bv = state.beta.values();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < q; ++j) {
      const double xn = (xv[r * q + j] - mean[j]) * invstd[j];
      xhat[r * q + j] = xn;
      out[r * q + j] = xn * gv[j] + bv[j];
    }
  }

  Tensor result({m, q}, std::move(out), any_requires_grad(x, state.gamma, state.beta));
  if (result.requires_grad()) {
    const bool train = mode == Mode::train;
    result.set_node(make_node(
        {x, state.gamma, state.beta},
        [m, q, train, invstd = std::move(invstd), xhat = std::move(xhat)](const Tensor& out_t) {
          auto& node = *out_t.node();
          Tensor& xr = node.parents[0];
          Tensor& gammar = node.parents[1];
          Tensor& betar = node.parents[2];
          const auto& g = out_t.grad();

          std::vector<double> sum_dy(q, 0.0);
          std::vector<double> sum_dy_xhat(q, 0.0);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < q; ++j) {
              sum_dy[j] += g[r * q + j];
              sum_dy_xhat[j] += g[r * q + j] * xhat[r * q + j];
            }
          }
          if (betar.requires_grad()) {
            auto& gb = betar.grad();
            for (std::size_t j = 0; j < q; ++j) gb[j] += sum_dy[j];
          }
          if (gammar.requires_grad()) {
            auto& gg = gammar.grad();
            for (std::size_t j = 0; j < q; ++j) gg[j] += sum_dy_xhat[j];
          }
          if (xr.requires_grad()) {
            const auto& gv = gammar.values();
            auto& gx = xr.grad();
            if (train) {
              const double inv_m = 1.0 / static_cast<double>(m);
              for (std::size_t r = 0; r < m; ++r) {
                for (std::size_t j = 0; j < q; ++j) {
                  gx[r * q + j] += gv[j] * invstd[j] * inv_m *
                                   (static_cast<double>(m) * g[r * q + j] - sum_dy[j] -
                                    xhat[r * q + j] * sum_dy_xhat[j]);
                }
              }
            } else {
              for (std::size_t r = 0; r < m; ++r) {
                for (std::size_t j = 0; j < q; ++j) {
                  gx[r * q + j] += gv[j] * invstd[j] * g[r * q + j];
                }
              }
            }
          }
        }));
  }
  return result;
}

LstmParams LstmParams::make(std::size_t input_dim, std::size_t hidden, RngStream& rng) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim + hidden));
  p.w = uniform_init({input_dim + hidden, 4 * hidden}, bound, rng);
  p.b = Tensor::zeros({4 * hidden}, true);
  return p;
}

LstmOut lstm_cell_step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                       const LstmParams& params) {
  require(x.cols() == params.input_dim,
          "lstm_cell_step: input " + shape_str(x.shape()) + " does not match input_dim " +
              std::to_string(params.input_dim));
  require(h_prev.cols() == params.hidden && c_prev.cols() == params.hidden,
          "lstm_cell_step: state width does not match hidden " + std::to_string(params.hidden));
  const std::size_t hid = params.hidden;
  Tensor gates = affine(concat_cols(x, h_prev), params.w, params.b);
  Tensor gate_i = activation(slice_cols(gates, 0, hid), Activation::sigmoid);
  Tensor gate_f = activation(slice_cols(gates, hid, hid), Activation::sigmoid);
  Tensor gate_g = activation(slice_cols(gates, 2 * hid, hid), Activation::tanh);
  Tensor gate_o = activation(slice_cols(gates, 3 * hid, hid), Activation::sigmoid);
  Tensor c = add(mul(gate_f, c_prev), mul(gate_i, gate_g));
  Tensor h = mul(gate_o, activation(c, Activation::tanh));
  return {h, c};
}

Tensor uniform_init(std::vector<std::size_t> shape, double bound, RngStream& rng) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = (2.0 * rng.next_double() - 1.0) * bound;
  }
  return Tensor(std::move(shape), std::move(values), true);
}

}  // namespace knnseq::diff
