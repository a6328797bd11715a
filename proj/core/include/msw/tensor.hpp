#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace msw {

using Shape = std::vector<std::size_t>;

// Every stochastic operation takes one of these explicitly.
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched by backward
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor of doubles with an optional autograd history.
///
/// A Tensor is a cheap handle; copies share the same node. Data is fixed
/// once an op has produced it. Only leaves may have their data rewritten
/// (the optimizer does this between passes).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Copy of the values with no history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Builds an op result. The backward rule is recorded only when at least
// one input requires grad; otherwise the result is a plain constant.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward);

// Grad buffer of the i-th input, or nullptr if it is not being tracked.
double* input_grad(Node& self, std::size_t i);

}  // namespace detail

/// The recorded operations reachable from a loss, in topological order.
class Graph {
 public:
  static Graph collect(const Tensor& loss);

  std::size_t size() const { return order_.size(); }
  const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return order_; }

  // Runs every backward rule once. Leaves accumulate into their grad
  // buffers; the graph is consumed afterwards.
  void backward();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> order_;
};

// While alive, ops on this thread record no backward rules.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// A graph may be backpropagated once. A second call on the same loss, or
// on any loss sharing consumed nodes, raises GraphError.
void backward(const Tensor& loss);

}  // namespace msw
