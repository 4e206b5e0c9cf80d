#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace knnseq::diff {

class Tensor;

// One recorded primitive. `parents` are the operation inputs; `backward`
// reads the output's adjoint and accumulates into the parents' gradients.
// The chain of nodes reachable from a loss tensor is the computation record:
// replaying it once, in reverse topological order, yields exact adjoints.
struct Node {
  std::vector<Tensor> parents;
  std::function<void(const Tensor& out)> backward;
};

// Dense 64-bit float tensor with value semantics over a shared payload.
// Rank 0 (scalar), 1 and 2 are supported; everything is row-major.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t size() const;
  std::size_t ndim() const { return shape().size(); }
  // 2-D views: rank-1 tensors count as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  double item() const;

  bool requires_grad() const;
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  // Reverse-mode sweep from a scalar. Seeds this tensor's adjoint with 1,
  // walks the recorded operations once each in reverse topological order and
  // accumulates gradients into every reachable tensor with requires_grad.
  void backward() const;

  // Internal: attach the autograd node for an op output.
  void set_node(std::shared_ptr<Node> node);
  const std::shared_ptr<Node>& node() const;

  // Identity of the shared payload; used for cycle-free graph walks.
  const void* id() const { return impl_.get(); }

  // A copy that shares nothing and records nothing.
  Tensor detached() const;

  void check_finite(const std::string& context) const;

 private:
  struct Impl {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> node;
  };
  std::shared_ptr<Impl> impl_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace knnseq::diff
