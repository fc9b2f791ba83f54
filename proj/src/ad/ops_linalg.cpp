#include "gemm.hpp"
#include "ops_internal.hpp"

namespace vqsf::ad {

using detail::cv;
using detail::gin;
using detail::gout;

namespace {

template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  detail::gemm_nn(m, k, n, a, k, b, n, c, n);
}

template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  detail::gemm_nt(m, k, n, a, k, b, k, c, n);
}

template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  detail::gemm_tn(m, k, n, a, k, b, n, c, n);
}

}  // namespace

Var matmul(const Var& a, const Var& w) {
  detail::require_same_dtype("matmul", a, w);
  if (a.shape().empty() || w.shape().size() != 2 || a.shape().back() != w.dim(0))
    detail::shape_error("matmul", "cannot multiply " + to_string(a.shape()) + " by " + to_string(w.shape()));
  const std::size_t k = w.dim(0);
  const std::size_t n = w.dim(1);
  const std::size_t m = a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor out(out_shape, a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    gemm_nn(cv<T>(a).data(), cv<T>(w).data(), out.span<T>().data(), m, k, n);
  });
  return make_result(std::move(out), "matmul", {a, w}, [m, k, n](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      if (auto ga = gin<T>(self, 0); !ga.empty()) gemm_nt(g.data(), cv<T>(self.inputs[1]).data(), ga.data(), m, n, k);
      if (auto gw = gin<T>(self, 1); !gw.empty()) gemm_tn(cv<T>(self.inputs[0]).data(), g.data(), gw.data(), m, k, n);
    });
  });
}

Var bmm(const Var& a, const Var& b, bool transpose_b) {
  detail::require_same_dtype("bmm", a, b);
  if (a.shape().size() != 3 || b.shape().size() != 3 || a.dim(0) != b.dim(0))
    detail::shape_error("bmm", "cannot batch-multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  const std::size_t batch = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  if (bk != k)
    detail::shape_error("bmm", "inner extents differ: " + to_string(a.shape()) + " by " + to_string(b.shape()) +
                                   (transpose_b ? " (transposed)" : ""));
  Tensor out({batch, m, n}, a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = cv<T>(a);
    auto y = cv<T>(b);
    auto o = out.span<T>();
    for (std::size_t s = 0; s < batch; ++s) {
      if (transpose_b) gemm_nt(x.data() + s * m * k, y.data() + s * n * k, o.data() + s * m * n, m, k, n);
      else gemm_nn(x.data() + s * m * k, y.data() + s * k * n, o.data() + s * m * n, m, k, n);
    }
  });
  return make_result(std::move(out), "bmm", {a, b}, [batch, m, k, n, transpose_b](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto x = cv<T>(self.inputs[0]);
      auto y = cv<T>(self.inputs[1]);
      auto ga = gin<T>(self, 0);
      auto gb = gin<T>(self, 1);
      for (std::size_t s = 0; s < batch; ++s) {
        const T* gs = g.data() + s * m * n;
        const T* xs = x.data() + s * m * k;
        if (transpose_b) {
          const T* ys = y.data() + s * n * k;
          // out = x y^T: dx = g y, dy = g^T x
          if (!ga.empty()) gemm_nn(gs, ys, ga.data() + s * m * k, m, n, k);
          if (!gb.empty()) gemm_tn(gs, xs, gb.data() + s * n * k, m, n, k);
        } else {
          const T* ys = y.data() + s * k * n;
          if (!ga.empty()) gemm_nt(gs, ys, ga.data() + s * m * k, m, n, k);
          if (!gb.empty()) gemm_tn(xs, gs, gb.data() + s * k * n, m, k, n);
        }
      }
    });
  });
}

}  // namespace vqsf::ad
