#pragma once

#include <string>

#include "vqsf/ad/ops.hpp"
#include "vqsf/common/error.hpp"

namespace vqsf::ad::detail {

[[noreturn]] inline void shape_error(const char* op, const std::string& what) {
  throw DataError(std::string(op) + ": " + what);
}

inline void require_same_dtype(const char* op, const Var& a, const Var& b) {
  if (a.dtype() != b.dtype()) shape_error(op, "operand dtypes differ");
}

template <class T>
std::span<const T> cv(const Var& v) {
  return v.value().span<const T>();
}

template <class T>
std::span<const T> cv(const std::shared_ptr<Node>& n) {
  return n->value.span<const T>();
}

// Gradient buffer of input `i`, or an empty span if it needs none.
template <class T>
std::span<T> gin(Node& self, std::size_t i) {
  auto& in = self.inputs[i];
  if (!in || !in->requires_grad) return {};
  return in->grad_buffer().span<T>();
}

template <class T>
std::span<const T> gout(const Node& self) {
  return self.grad.span<const T>();
}

}  // namespace vqsf::ad::detail
