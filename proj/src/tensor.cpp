#include "knnseq/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace knnseq::diff {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) {
    n *= s;
  }
  return n;
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad) {
  if (shape_product(shape) != values.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
  if (requires_grad) {
    impl_->grad.assign(impl_->values.size(), 0.0);
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  const std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
  const std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::size() const { return impl_->values.size(); }

std::size_t Tensor::rows() const {
  const auto& s = impl_->shape;
  if (s.size() == 2) return s[0];
  if (s.size() == 1) return 1;
  if (s.empty()) return 1;
  throw std::invalid_argument("Tensor::rows: rank > 2 not supported");
}

std::size_t Tensor::cols() const {
  const auto& s = impl_->shape;
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  if (s.empty()) return 1;
  throw std::invalid_argument("Tensor::cols: rank > 2 not supported");
}

std::vector<double>& Tensor::values() { return impl_->values; }
const std::vector<double>& Tensor::values() const { return impl_->values; }

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(size()) + " elements");
  }
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

std::vector<double>& Tensor::grad() {
  if (!requires_grad()) {
    throw std::logic_error("Tensor::grad: tensor does not require gradients");
  }
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!requires_grad()) {
    throw std::logic_error("Tensor::grad: tensor does not require gradients");
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (requires_grad()) {
    impl_->grad.assign(impl_->values.size(), 0.0);
  }
}

void Tensor::set_node(std::shared_ptr<Node> node) { impl_->node = std::move(node); }

const std::shared_ptr<Node>& Tensor::node() const { return impl_->node; }

Tensor Tensor::detached() const {
  return Tensor(impl_->shape, impl_->values, false);
}

void Tensor::check_finite(const std::string& context) const {
  for (double v : impl_->values) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(context + ": non-finite value in tensor " + shape_str(impl_->shape));
    }
  }
}

void Tensor::backward() const {
  if (size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(shape()));
  }
  if (!requires_grad()) {
    throw std::logic_error("backward: loss does not require gradients");
  }

  // Iterative post-order DFS; insertion order of parents fixes the
  // accumulation order, so the sweep is deterministic.
  std::vector<Tensor> topo;
  std::unordered_set<const void*> visited;
  struct Frame {
    Tensor t;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({*this, 0});
  visited.insert(id());
  while (!stack.empty()) {
    Frame& frame = stack.back();
    const auto& node = frame.t.node();
    const std::size_t n_parents = node ? node->parents.size() : 0;
    if (frame.next_parent < n_parents) {
      Tensor parent = node->parents[frame.next_parent++];
      if (visited.insert(parent.id()).second) {
        stack.push_back({std::move(parent), 0});
      }
    } else {
      topo.push_back(frame.t);
      stack.pop_back();
    }
  }

  impl_->grad.assign(1, 1.0);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const auto& node = it->node();
    if (node && node->backward) {
      node->backward(*it);
    }
  }
}

}  // namespace knnseq::diff
