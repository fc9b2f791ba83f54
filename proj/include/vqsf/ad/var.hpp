#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vqsf/ad/tensor.hpp"

namespace vqsf::ad {

// One recorded operation (or a leaf). `backward` reads this node's `grad` and
// accumulates into the grads of `inputs` that require gradients.
struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Gradient buffer, zero-initialized on first use.
  Tensor& grad_buffer();
};

// Graph recording is on by default; NoGradScope disables it for the current thread.
bool grad_enabled();

class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool saved_;
};

// NaN/Inf checks after every op and backward pass. On by default in debug builds.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Direct access for optimizers and initializers; does not touch the graph.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t numel() const { return node_->value.numel(); }
  DType dtype() const { return node_->value.dtype(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();

  // Reverse-mode sweep from this scalar. Each reachable node runs its
  // backward function exactly once, in reverse topological order.
  void backward() const;

  // Same value, cut from the graph.
  Var detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an op output. Records `backward` only when grad mode is on and some
// input requires a gradient.
Var make_result(Tensor value, const char* op, std::vector<Var> inputs, std::function<void(Node&)> backward);

}  // namespace vqsf::ad
