#include "vqsf/ad/var.hpp"

#include <string>
#include <unordered_set>

#include "vqsf/common/error.hpp"

namespace vqsf::ad {
namespace {

thread_local bool g_grad_enabled = true;
#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && value.numel() != 0) grad = Tensor::zeros(value.shape(), value.dtype());
  if (grad.shape() != value.shape()) grad = Tensor::zeros(value.shape(), value.dtype());
  return grad;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradScope::NoGradScope() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = saved_; }

bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool enabled) { g_finite_checks = enabled; }

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.zero();
}

Var Var::detach() const { return Var(node_->value, false); }

void Var::backward() const {
  if (!node_) throw DataError("backward on undefined variable");
  if (node_->value.numel() != 1)
    throw DataError("backward requires a scalar loss, got shape " + to_string(node_->value.shape()));
  if (!node_->requires_grad) throw DataError("backward on a loss detached from every parameter");

  // Iterative post-order DFS gives a topological order of the reachable graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  if (g_finite_checks) {
    for (Node* node : order)
      if (!node->grad.empty() && !node->grad.all_finite())
        throw DivergenceError(std::string("non-finite gradient at op '") + node->op + "'");
  }
}

Var make_result(Tensor value, const char* op, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  if (g_finite_checks && !value.all_finite())
    throw DivergenceError(std::string("non-finite output of op '") + op + "'");
  Var out(std::move(value), false);
  auto& node = *out.node();
  node.op = op;
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  node.requires_grad = true;
  node.inputs.reserve(inputs.size());
  for (auto& in : inputs) node.inputs.push_back(in.node());
  node.backward = std::move(backward);
  return out;
}

}  // namespace vqsf::ad
