#include <numeric>

#include "ops_internal.hpp"

namespace vqsf::ad {

using detail::cv;
using detail::gin;
using detail::gout;

Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.numel())
    detail::shape_error("reshape", "cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  return make_result(a.value().reshaped(std::move(shape)), "reshape", {a}, [](Node& self) {
    self.inputs[0]->grad_buffer().add_(self.grad.reshaped(self.inputs[0]->value.shape()));
  });
}

namespace {

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace

Var permute(const Var& a, std::span<const std::size_t> perm) {
  const auto& s = a.shape();
  const std::size_t rank = s.size();
  std::vector<std::size_t> sorted(perm.begin(), perm.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(rank);
  std::iota(iota.begin(), iota.end(), 0);
  if (perm.size() != rank || sorted != iota)
    detail::shape_error("permute", "invalid permutation for shape " + to_string(s));
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = s[perm[i]];
  // map[out_flat] = in_flat
  const auto in_strides = strides_of(s);
  std::vector<std::size_t> map(a.numel());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_strides[perm[i]];
    map[flat] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  Tensor out(out_shape, a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = cv<T>(a);
    auto o = out.span<T>();
    for (std::size_t i = 0; i < map.size(); ++i) o[i] = x[map[i]];
  });
  return make_result(std::move(out), "permute", {a}, [map = std::move(map)](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto gx = gin<T>(self, 0);
      for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += g[i];
    });
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) detail::shape_error("concat", "no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) detail::shape_error("concat", "axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    detail::require_same_dtype("concat", parts[0], p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) detail::shape_error("concat", "cannot join " + to_string(first) + " and " + to_string(s));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.dim(axis) * inner);
  const std::size_t total_width = out_shape[axis] * inner;

  Tensor out(out_shape, first.empty() ? default_dtype() : parts[0].dtype());
  visit_dtype(parts[0].dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto o = out.span<T>();
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto x = cv<T>(parts[k]);
      for (std::size_t r = 0; r < outer; ++r)
        std::copy_n(x.data() + r * widths[k], widths[k], o.data() + r * total_width + off);
      off += widths[k];
    }
  });
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_result(std::move(out), "concat", std::move(inputs), [widths, outer, total_width](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        auto gk = gin<T>(self, k);
        if (!gk.empty())
          for (std::size_t r = 0; r < outer; ++r) {
            const T* src = g.data() + r * total_width + off;
            T* dst = gk.data() + r * widths[k];
            for (std::size_t c = 0; c < widths[k]; ++c) dst[c] += src[c];
          }
        off += widths[k];
      }
    });
  });
}

Var masked_fill(const Var& a, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != a.numel())
    detail::shape_error("masked_fill", std::to_string(mask.size()) + " mask entries for " + to_string(a.shape()));
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  Tensor out = a.value();
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) out.set(i, value);
  return make_result(std::move(out), "masked_fill", {a}, [m = std::move(m)](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto gx = gin<T>(self, 0);
      for (std::size_t i = 0; i < m.size(); ++i)
        if (!m[i]) gx[i] += g[i];
    });
  });
}

}  // namespace vqsf::ad
