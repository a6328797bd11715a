#include "msw/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "msw/errors.hpp"

namespace msw {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
thread_local bool grad_disabled = false;
}

NoGradGuard::NoGradGuard() : previous_(grad_disabled) { grad_disabled = true; }
NoGradGuard::~NoGradGuard() { grad_disabled = previous_; }

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  const bool tracked = !grad_disabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
    return t.defined() && t.requires_grad();
  });
  if (tracked) {
    node->requires_grad = true;
    node->backward_fn = std::move(backward);
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.node());
  }
  return Tensor(std::move(node));
}

double* input_grad(Node& self, std::size_t i) {
  auto& parent = self.parents.at(i);
  if (!parent || !parent->requires_grad) return nullptr;
  return parent->ensure_grad().data();
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(shape_numel(shape), value);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
  if (!node_->is_leaf()) throw GraphError("only leaf tensors may be written in place");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) {
    throw DimensionError("index rank mismatch for " + shape_str(s));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->is_leaf(); }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from_data(shape(), node_->data, false); }

Graph Graph::collect(const Tensor& loss) {
  if (!loss.defined()) throw GraphError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw GraphError("loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw GraphError("loss is detached from every parameter");

  Graph graph;
  graph.root_ = loss.node();
  // Iterative post-order DFS: a node is emitted after all of its parents.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(graph.root_.get(), 0);
  visited.insert(graph.root_.get());
  std::unordered_map<const detail::Node*, std::shared_ptr<detail::Node>> owner;
  owner.emplace(graph.root_.get(), graph.root_);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->consumed) throw GraphError("graph has already been backpropagated");
    if (next < node->parents.size()) {
      const auto& parent = node->parents[next++];
      if (parent->requires_grad && visited.insert(parent.get()).second) {
        owner.emplace(parent.get(), parent);
        stack.emplace_back(parent.get(), 0);
      }
    } else {
      graph.order_.push_back(owner.at(node));
      stack.pop_back();
    }
  }
  return graph;
}

void Graph::backward() {
  if (root_->consumed) throw GraphError("graph has already been backpropagated");
  root_->ensure_grad()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& node = **it;
    if (node.is_leaf()) continue;
    if (node.grad.empty()) node.ensure_grad();
    node.backward_fn(node);
  }
  for (auto& node : order_) {
    if (node->is_leaf()) continue;
    node->consumed = true;
    node->backward_fn = nullptr;
    node->parents.clear();
  }
  // Clearing backward_fn makes interior nodes look like leaves; the
  // consumed flag is what keeps them from being reused.
}

void backward(const Tensor& loss) { Graph::collect(loss).backward(); }

}  // namespace msw
