#include <cmath>

#include "ops_internal.hpp"

namespace vqsf::ad {

using detail::cv;
using detail::gin;
using detail::gout;

Var constant(Tensor value) { return Var(std::move(value), false); }

namespace {

enum class BinOp { add, sub, mul };

bool is_suffix(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()));
}

Var binary(const Var& a, const Var& b, BinOp kind, const char* name) {
  detail::require_same_dtype(name, a, b);
  const std::size_t n = a.numel();
  const std::size_t nb = b.numel();
  if (!(a.shape() == b.shape() || nb == 1 || is_suffix(a.shape(), b.shape())))
    detail::shape_error(name, "cannot combine " + to_string(a.shape()) + " with " + to_string(b.shape()));
  if (nb == 0 || n % nb != 0)
    detail::shape_error(name, "cannot combine " + to_string(a.shape()) + " with " + to_string(b.shape()));

  Tensor out(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = cv<T>(a);
    auto y = cv<T>(b);
    auto o = out.span<T>();
    for (std::size_t base = 0; base < n; base += nb) {
      for (std::size_t j = 0; j < nb; ++j) {
        const T u = x[base + j];
        const T v = y[j];
        o[base + j] = kind == BinOp::add ? u + v : kind == BinOp::sub ? u - v : u * v;
      }
    }
  });

  return make_result(std::move(out), name, {a, b}, [kind, n, nb](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto ga = gin<T>(self, 0);
      auto gb = gin<T>(self, 1);
      auto x = cv<T>(self.inputs[0]);
      auto y = cv<T>(self.inputs[1]);
      for (std::size_t base = 0; base < n; base += nb) {
        for (std::size_t j = 0; j < nb; ++j) {
          const T gj = g[base + j];
          if (!ga.empty()) ga[base + j] += kind == BinOp::mul ? gj * y[j] : gj;
          if (!gb.empty()) gb[j] += kind == BinOp::add ? gj : kind == BinOp::sub ? -gj : gj * x[base + j];
        }
      }
    });
  });
}

template <class Fwd, class Bwd>
Var unary(const Var& a, const char* name, Fwd fwd, Bwd bwd) {
  Tensor out(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = cv<T>(a);
    auto o = out.span<T>();
    for (std::size_t i = 0; i < x.size(); ++i) o[i] = static_cast<T>(fwd(x[i]));
  });
  return make_result(std::move(out), name, {a}, [bwd](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto gx = gin<T>(self, 0);
      auto x = cv<T>(self.inputs[0]);
      auto y = self.value.span<const T>();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += static_cast<T>(g[i] * bwd(x[i], y[i]));
    });
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(a, b, BinOp::add, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinOp::sub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinOp::mul, "multiply"); }

Var scale(const Var& a, double factor) {
  return unary(
      a, "scale", [factor](auto x) { return x * factor; }, [factor](auto, auto) { return factor; });
}

Var add_scalar(const Var& a, double value) {
  return unary(
      a, "add_scalar", [value](auto x) { return x + value; }, [](auto, auto) { return 1.0; });
}

Var relu(const Var& a) {
  return unary(
      a, "relu", [](auto x) { return x > 0 ? x : decltype(x){0}; },
      [](auto x, auto) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, "sigmoid",
      [](auto x) {
        using T = decltype(x);
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](auto, auto y) { return static_cast<double>(y) * (1.0 - static_cast<double>(y)); });
}

Var sum(const Var& a) {
  double total = 0.0;
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    for (T v : cv<T>(a)) total += v;
  });
  return make_result(Tensor::scalar(total, a.dtype()), "sum", {a}, [](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      const T g = gout<T>(self)[0];
      for (auto& v : gin<T>(self, 0)) v += g;
    });
  });
}

Var mean(const Var& a) {
  if (a.numel() == 0) detail::shape_error("mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var straight_through(const Var& z, const Tensor& target) {
  if (target.shape() != z.shape() || target.dtype() != z.dtype())
    detail::shape_error("straight_through", "target " + to_string(target.shape()) + " for input " + to_string(z.shape()));
  return make_result(target, "straight_through", {z}, [](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    self.inputs[0]->grad_buffer().add_(self.grad);
  });
}

}  // namespace vqsf::ad
