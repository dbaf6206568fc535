#include "deskasr/gradcore/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "deskasr/errors.hpp"

namespace deskasr::gradcore {

namespace {
std::atomic<std::uint64_t> g_seq{1};
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << ")";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) {
    throw ConsistencyError("tensor has no gradient (backward not run or not reached)");
  }
  return node_->grad;
}

std::vector<double> Tensor::grad_copy() const {
  auto g = grad();
  return std::vector<double>(g.begin(), g.end());
}

void Tensor::zero_grad() {
  if (node_->grad.size() == node_->value.size()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  Tensor t = Tensor::from(std::move(shape), std::move(value));
  t.node()->requires_grad = needs;
  if (needs) {
    t.node()->parents.reserve(parents.size());
    for (auto& p : parents) t.node()->parents.push_back(p.handle());
    t.node()->backprop = std::move(backprop);
  }
  return t;
}

void backward(const Tensor& root) {
  if (root.size() != 1) {
    throw DimensionError("backward() root must be scalar, got shape " +
                         shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Collect the reachable subgraph (iterative DFS).
  std::vector<detail::Node*> nodes;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root.node()};
  seen.insert(root.node());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  // Reverse creation order is a topological order of the DAG.
  std::sort(nodes.begin(), nodes.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  for (detail::Node* n : nodes) n->ensure_grad();
  root.node()->grad[0] += 1.0;
  for (detail::Node* n : nodes) {
    if (n->backprop) n->backprop(*n);
  }
}

}  // namespace deskasr::gradcore
