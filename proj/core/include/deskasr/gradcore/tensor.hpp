#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace deskasr::gradcore {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::uint64_t seq = 0;  // creation order, fixes backward accumulation order
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense fp64 tensor with a recorded computation history. Value-semantics
// handle over a shared autograd node; copying shares storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t ndim() const { return node_->shape.size(); }

  std::span<const double> value() const { return node_->value; }
  // Mutable access for leaf tensors (parameter updates, data fill).
  std::vector<double>& raw() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const double> grad() const;
  std::vector<double> grad_copy() const;
  void zero_grad();

  // Value of a single-element tensor.
  double item() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& handle() const { return node_; }

  friend Tensor make_op(Shape shape, std::vector<double> value,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backprop);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// Builds a non-leaf node. requires_grad is inherited from parents; backprop
// is dropped when no parent needs gradients.
Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop);

// Reverse pass from a scalar root. Seeds d(root)/d(root) = 1 and visits the
// recorded history in reverse creation order, which is a topological order.
// Gradients accumulate; callers zero parameter grads between steps.
void backward(const Tensor& root);

}  // namespace deskasr::gradcore
