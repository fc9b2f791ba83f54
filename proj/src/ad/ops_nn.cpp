#include <cmath>
#include <limits>

#include "ops_internal.hpp"

namespace vqsf::ad {

using detail::cv;
using detail::gin;
using detail::gout;

Var softmax(const Var& a) {
  if (a.shape().empty()) detail::shape_error("softmax", "scalar input");
  const std::size_t C = a.shape().back();
  const std::size_t rows = C == 0 ? 0 : a.numel() / C;
  Tensor out(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = cv<T>(a);
    auto o = out.span<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = x.data() + r * C;
      T* orow = o.data() + r * C;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, xr[c]);
      double total = 0;
      for (std::size_t c = 0; c < C; ++c) {
        orow[c] = std::exp(xr[c] - mx);
        total += orow[c];
      }
      const T inv = static_cast<T>(1.0 / total);
      for (std::size_t c = 0; c < C; ++c) orow[c] *= inv;
    }
  });
  return make_result(std::move(out), "softmax", {a}, [rows, C](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto y = self.value.span<const T>();
      auto gx = gin<T>(self, 0);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = g.data() + r * C;
        const T* yr = y.data() + r * C;
        T dot = 0;
        for (std::size_t c = 0; c < C; ++c) dot += gr[c] * yr[c];
        T* out = gx.data() + r * C;
        for (std::size_t c = 0; c < C; ++c) out[c] += yr[c] * (gr[c] - dot);
      }
    });
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  detail::require_same_dtype("layer_norm", x, gamma);
  detail::require_same_dtype("layer_norm", x, beta);
  if (x.shape().empty()) detail::shape_error("layer_norm", "scalar input");
  const std::size_t C = x.shape().back();
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
    detail::shape_error("layer_norm", "gain/bias " + to_string(gamma.shape()) + "/" + to_string(beta.shape()) +
                                          " for rows of " + std::to_string(C));
  const std::size_t rows = x.numel() / C;
  Tensor out(x.shape(), x.dtype());
  // Normalized rows and inverse std, reused by backward.
  Tensor xhat(x.shape(), x.dtype());
  std::vector<double> inv_std(rows);
  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto xv = cv<T>(x);
    auto gv = cv<T>(gamma);
    auto bv = cv<T>(beta);
    auto o = out.span<T>();
    auto h = xhat.span<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = xv.data() + r * C;
      double mu = 0;
      for (std::size_t c = 0; c < C; ++c) mu += xr[c];
      mu /= static_cast<double>(C);
      double var = 0;
      for (std::size_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
      var /= static_cast<double>(C);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[r] = is;
      for (std::size_t c = 0; c < C; ++c) {
        const T n = static_cast<T>((xr[c] - mu) * is);
        h[r * C + c] = n;
        o[r * C + c] = n * gv[c] + bv[c];
      }
    }
  });
  return make_result(std::move(out), "layer_norm", {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, C](Node& self) {
                       visit_dtype(self.value.dtype(), [&](auto zero) {
                         using T = decltype(zero);
                         auto g = gout<T>(self);
                         auto h = xhat.span<const T>();
                         auto gv = cv<T>(self.inputs[1]);
                         auto gx = gin<T>(self, 0);
                         auto gg = gin<T>(self, 1);
                         auto gb = gin<T>(self, 2);
                         for (std::size_t r = 0; r < rows; ++r) {
                           const T* gr = g.data() + r * C;
                           const T* hr = h.data() + r * C;
                           if (!gg.empty())
                             for (std::size_t c = 0; c < C; ++c) gg[c] += gr[c] * hr[c];
                           if (!gb.empty())
                             for (std::size_t c = 0; c < C; ++c) gb[c] += gr[c];
                           if (gx.empty()) continue;
                           double mean_d = 0, mean_dh = 0;
                           for (std::size_t c = 0; c < C; ++c) {
                             const double d = static_cast<double>(gr[c]) * gv[c];
                             mean_d += d;
                             mean_dh += d * hr[c];
                           }
                           mean_d /= static_cast<double>(C);
                           mean_dh /= static_cast<double>(C);
                           for (std::size_t c = 0; c < C; ++c) {
                             const double d = static_cast<double>(gr[c]) * gv[c];
                             gx[r * C + c] += static_cast<T>(inv_std[r] * (d - mean_d - hr[c] * mean_dh));
                           }
                         }
                       });
                     });
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  if (targets.numel() != logits.numel())
    detail::shape_error("bce_with_logits", "logits " + to_string(logits.shape()) + " vs targets " +
                                               to_string(targets.shape()));
  if (logits.numel() == 0) detail::shape_error("bce_with_logits", "empty input");
  const std::size_t n = logits.numel();
  std::vector<double> t = targets.to_vector();
  double total = 0;
  visit_dtype(logits.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = cv<T>(logits);
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = x[i];
      total += std::max(xi, 0.0) - xi * t[i] + std::log1p(std::exp(-std::abs(xi)));
    }
  });
  return make_result(Tensor::scalar(total / static_cast<double>(n), logits.dtype()), "bce_with_logits", {logits},
                     [t = std::move(t), n](Node& self) {
                       visit_dtype(self.value.dtype(), [&](auto zero) {
                         using T = decltype(zero);
                         const double g = gout<T>(self)[0] / static_cast<double>(n);
                         auto x = cv<T>(self.inputs[0]);
                         auto gx = gin<T>(self, 0);
                         for (std::size_t i = 0; i < n; ++i) {
                           const double xi = x[i];
                           const double s = xi >= 0 ? 1.0 / (1.0 + std::exp(-xi)) : std::exp(xi) / (1.0 + std::exp(xi));
                           gx[i] += static_cast<T>(g * (s - t[i]));
                         }
                       });
                     });
}

Var cross_entropy(const Var& logits, std::span<const std::int64_t> targets, std::span<const double> weights) {
  if (logits.shape().size() != 2 || logits.dim(0) != targets.size() || weights.size() != targets.size())
    detail::shape_error("cross_entropy", "logits " + to_string(logits.shape()) + " with " +
                                             std::to_string(targets.size()) + " targets and " +
                                             std::to_string(weights.size()) + " weights");
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  for (auto t : targets)
    if (t >= static_cast<std::int64_t>(C))
      detail::shape_error("cross_entropy", "target " + std::to_string(t) + " for " + std::to_string(C) + " classes");
  std::vector<std::int64_t> tv(targets.begin(), targets.end());
  std::vector<double> wv(weights.begin(), weights.end());
  // Row log-sum-exp, reused by backward.
  std::vector<double> lse(N, 0.0);
  double total = 0;
  visit_dtype(logits.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = cv<T>(logits);
    for (std::size_t r = 0; r < N; ++r) {
      if (tv[r] < 0) continue;
      const T* xr = x.data() + r * C;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(xr[c]));
      double s = 0;
      for (std::size_t c = 0; c < C; ++c) s += std::exp(xr[c] - mx);
      lse[r] = mx + std::log(s);
      total += wv[r] * (lse[r] - xr[tv[r]]);
    }
  });
  return make_result(Tensor::scalar(total, logits.dtype()), "cross_entropy", {logits},
                     [tv = std::move(tv), wv = std::move(wv), lse = std::move(lse), C](Node& self) {
                       visit_dtype(self.value.dtype(), [&](auto zero) {
                         using T = decltype(zero);
                         const double g = gout<T>(self)[0];
                         auto x = cv<T>(self.inputs[0]);
                         auto gx = gin<T>(self, 0);
                         for (std::size_t r = 0; r < tv.size(); ++r) {
                           if (tv[r] < 0 || wv[r] == 0.0) continue;
                           const double scale = g * wv[r];
                           const T* xr = x.data() + r * C;
                           T* gr = gx.data() + r * C;
                           for (std::size_t c = 0; c < C; ++c) gr[c] += static_cast<T>(scale * std::exp(xr[c] - lse[r]));
                           gr[tv[r]] -= static_cast<T>(scale);
                         }
                       });
                     });
}

}  // namespace vqsf::ad
