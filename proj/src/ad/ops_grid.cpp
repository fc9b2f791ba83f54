#include <algorithm>
#include <array>
#include <cmath>

#include "gemm.hpp"
#include "ops_internal.hpp"

namespace vqsf::ad {

using detail::cv;
using detail::gin;
using detail::gout;

namespace {

struct ConvGeometry {
  std::size_t batch, in[3], out[3], cin, cout, k, stride, pad;

  std::size_t in_index(std::size_t b, std::size_t x, std::size_t y, std::size_t z) const {
    return (((b * in[0] + x) * in[1] + y) * in[2] + z) * cin;
  }
  std::size_t out_index(std::size_t b, std::size_t x, std::size_t y, std::size_t z) const {
    return (((b * out[0] + x) * out[1] + y) * out[2] + z) * cout;
  }
  std::size_t w_index(std::size_t kx, std::size_t ky, std::size_t kz) const {
    return ((kx * k + ky) * k + kz) * cin * cout;
  }
};

// Visits every (kernel tap, output z-run) pair. A run is m consecutive output
// cells along z whose input cells are in range; successive input rows are
// stride*cin apart.
template <class Fn>
void for_each_run(const ConvGeometry& g, Fn&& fn) {
  const auto P = static_cast<std::ptrdiff_t>(g.pad);
  const auto S = static_cast<std::ptrdiff_t>(g.stride);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t ox = 0; ox < g.out[0]; ++ox)
      for (std::size_t oy = 0; oy < g.out[1]; ++oy)
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - P;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in[0])) continue;
          for (std::size_t ky = 0; ky < g.k; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - P;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in[1])) continue;
            for (std::size_t kz = 0; kz < g.k; ++kz) {
              const auto K = static_cast<std::ptrdiff_t>(kz);
              // iz = oz*S + K - P must lie in [0, in_z)
              const std::ptrdiff_t lo = K >= P ? 0 : (P - K + S - 1) / S;
              const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(g.in[2]) - 1 + P - K;
              if (top < 0) continue;
              const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(top / S + 1, static_cast<std::ptrdiff_t>(g.out[2]));
              if (hi <= lo) continue;
              const auto oz = static_cast<std::size_t>(lo);
              const auto iz = static_cast<std::size_t>(lo * S + K - P);
              fn(g.out_index(b, ox, oy, oz),
                 g.in_index(b, static_cast<std::size_t>(ix), static_cast<std::size_t>(iy), iz),
                 g.w_index(kx, ky, kz), static_cast<std::size_t>(hi - lo));
            }
          }
        }
}

}  // namespace

Var conv3d(const Var& x, const Var& w, const Var& bias, Conv3dOptions options) {
  detail::require_same_dtype("conv3d", x, w);
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 5 || ws.size() != 5 || ws[0] != ws[1] || ws[1] != ws[2] || ws[3] != xs[4])
    detail::shape_error("conv3d", "input " + to_string(xs) + " incompatible with kernel " + to_string(ws));
  if (options.stride == 0) detail::shape_error("conv3d", "stride must be positive");
  ConvGeometry g{};
  g.batch = xs[0];
  g.cin = xs[4];
  g.cout = ws[4];
  g.k = ws[0];
  g.stride = options.stride;
  g.pad = options.pad;
  for (int a = 0; a < 3; ++a) {
    g.in[a] = xs[1 + a];
    if (g.in[a] + 2 * g.pad < g.k)
      detail::shape_error("conv3d", "kernel " + to_string(ws) + " larger than padded input " + to_string(xs));
    g.out[a] = (g.in[a] + 2 * g.pad - g.k) / g.stride + 1;
  }
  if (bias.defined() && (bias.shape() != Shape{g.cout} || bias.dtype() != x.dtype()))
    detail::shape_error("conv3d", "bias " + to_string(bias.shape()) + " for " + std::to_string(g.cout) + " outputs");

  Tensor out({g.batch, g.out[0], g.out[1], g.out[2], g.cout}, x.dtype());
  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto in = cv<T>(x);
    auto wt = cv<T>(w);
    auto o = out.span<T>();
    if (bias.defined()) {
      auto bv = cv<T>(bias);
      for (std::size_t i = 0; i < o.size(); i += g.cout) std::copy(bv.begin(), bv.end(), o.begin() + i);
    }
    const std::size_t cin = g.cin, cout = g.cout;
    const std::size_t lda = g.stride * cin;
    for_each_run(g, [&](std::size_t oi, std::size_t ii, std::size_t wi, std::size_t m) {
      detail::gemm_nn(m, cin, cout, in.data() + ii, lda, wt.data() + wi, cout, o.data() + oi, cout);
    });
  });

  return make_result(std::move(out), "conv3d", {x, w, bias}, [g](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto gy = gout<T>(self);
      auto in = cv<T>(self.inputs[0]);
      auto wt = cv<T>(self.inputs[1]);
      auto gx = gin<T>(self, 0);
      auto gw = gin<T>(self, 1);
      auto gb = gin<T>(self, 2);
      const std::size_t cin = g.cin, cout = g.cout;
      if (!gb.empty())
        for (std::size_t i = 0; i < gy.size(); i += cout)
          for (std::size_t j = 0; j < cout; ++j) gb[j] += gy[i + j];
      const std::size_t ldx = g.stride * cin;
      // Per-tap transposed kernels turn dx into a plain gemm_nn.
      std::vector<T> wtt;
      if (!gx.empty()) {
        const std::size_t taps = g.k * g.k * g.k;
        wtt.resize(taps * cin * cout);
        for (std::size_t t = 0; t < taps; ++t)
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t j = 0; j < cout; ++j)
              wtt[t * cin * cout + j * cin + c] = wt[t * cin * cout + c * cout + j];
      }
      for_each_run(g, [&](std::size_t oi, std::size_t ii, std::size_t wi, std::size_t m) {
        if (!gx.empty()) detail::gemm_nn(m, cout, cin, gy.data() + oi, cout, wtt.data() + wi, cin, gx.data() + ii, ldx);
        if (!gw.empty()) detail::gemm_tn(m, cin, cout, in.data() + ii, ldx, gy.data() + oi, cout, gw.data() + wi, cout);
      });
    });
  });
}

Var upsample2x(const Var& grid) {
  const auto& s = grid.shape();
  if (s.size() != 5) detail::shape_error("upsample2x", "expected [B,X,Y,Z,C], got " + to_string(s));
  const std::size_t B = s[0], X = s[1], Y = s[2], Z = s[3], C = s[4];
  Tensor out({B, 2 * X, 2 * Y, 2 * Z, C}, grid.dtype());
  auto src_index = [=](std::size_t b, std::size_t x, std::size_t y, std::size_t z) {
    return (((b * X + x / 2) * Y + y / 2) * Z + z / 2) * C;
  };
  visit_dtype(grid.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto in = cv<T>(grid);
    auto o = out.span<T>();
    std::size_t dst = 0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t x = 0; x < 2 * X; ++x)
        for (std::size_t y = 0; y < 2 * Y; ++y)
          for (std::size_t z = 0; z < 2 * Z; ++z, dst += C)
            std::copy_n(in.data() + src_index(b, x, y, z), C, o.data() + dst);
  });
  return make_result(std::move(out), "upsample2x", {grid}, [=](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto gi = gin<T>(self, 0);
      std::size_t src = 0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t x = 0; x < 2 * X; ++x)
          for (std::size_t y = 0; y < 2 * Y; ++y)
            for (std::size_t z = 0; z < 2 * Z; ++z, src += C) {
              T* dst = gi.data() + src_index(b, x, y, z);
              for (std::size_t c = 0; c < C; ++c) dst[c] += g[src + c];
            }
    });
  });
}

namespace {

struct Corner {
  std::size_t offset;  // flat index of the corner's feature row
  double weight;
};

// The 8 trilinear taps of a point in a grid of extents (X, Y, Z).
std::array<Corner, 8> trilinear_taps(const double p[3], std::size_t b, const std::size_t ext[3], std::size_t C) {
  std::size_t lo[3], hi[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    const double u = p[a] * static_cast<double>(ext[a]) - 0.5;
    const double f = std::floor(u);
    t[a] = u - f;
    const auto i0 = static_cast<std::ptrdiff_t>(f);
    const auto last = static_cast<std::ptrdiff_t>(ext[a]) - 1;
    lo[a] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i0, 0, last));
    hi[a] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i0 + 1, 0, last));
  }
  std::array<Corner, 8> taps{};
  for (int c = 0; c < 8; ++c) {
    const std::size_t ix = (c & 4) ? hi[0] : lo[0];
    const std::size_t iy = (c & 2) ? hi[1] : lo[1];
    const std::size_t iz = (c & 1) ? hi[2] : lo[2];
    const double w = ((c & 4) ? t[0] : 1 - t[0]) * ((c & 2) ? t[1] : 1 - t[1]) * ((c & 1) ? t[2] : 1 - t[2]);
    taps[c] = {(((b * ext[0] + ix) * ext[1] + iy) * ext[2] + iz) * C, w};
  }
  return taps;
}

}  // namespace

Var trilinear_sample(const Var& grid, const Tensor& points) {
  const auto& s = grid.shape();
  const auto& ps = points.shape();
  if (s.size() != 5 || ps.size() != 3 || ps[2] != 3 || ps[0] != s[0])
    detail::shape_error("trilinear_sample", "grid " + to_string(s) + " with points " + to_string(ps));
  const std::size_t B = s[0], C = s[4], T_ = ps[1];
  const std::size_t ext[3] = {s[1], s[2], s[3]};
  const auto pts = points.to_vector();
  std::vector<std::array<Corner, 8>> taps(B * T_);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T_; ++t) taps[b * T_ + t] = trilinear_taps(&pts[(b * T_ + t) * 3], b, ext, C);

  Tensor out({B, T_, C}, grid.dtype());
  visit_dtype(grid.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto in = cv<T>(grid);
    auto o = out.span<T>();
    for (std::size_t q = 0; q < taps.size(); ++q) {
      T* orow = o.data() + q * C;
      for (const auto& tap : taps[q]) {
        const T w = static_cast<T>(tap.weight);
        const T* row = in.data() + tap.offset;
        for (std::size_t c = 0; c < C; ++c) orow[c] += w * row[c];
      }
    }
  });
  return make_result(std::move(out), "trilinear_sample", {grid}, [taps = std::move(taps), C](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto gi = gin<T>(self, 0);
      for (std::size_t q = 0; q < taps.size(); ++q) {
        const T* grow = g.data() + q * C;
        for (const auto& tap : taps[q]) {
          const T w = static_cast<T>(tap.weight);
          T* dst = gi.data() + tap.offset;
          for (std::size_t c = 0; c < C; ++c) dst[c] += w * grow[c];
        }
      }
    });
  });
}

Var scatter_max_pool(const Var& feats, std::span<const std::int64_t> cell_of_row, std::size_t n_cells) {
  if (feats.shape().size() != 2 || feats.dim(0) != cell_of_row.size())
    detail::shape_error("scatter_max_pool", "features " + to_string(feats.shape()) + " with " +
                                                std::to_string(cell_of_row.size()) + " cell indices");
  const std::size_t N = feats.dim(0), C = feats.dim(1);
  for (auto c : cell_of_row)
    if (c < 0 || static_cast<std::size_t>(c) >= n_cells)
      detail::shape_error("scatter_max_pool", "cell index " + std::to_string(c) + " outside [0," +
                                                  std::to_string(n_cells) + ")");
  // argmax[cell * C + ch] = winning row, or -1 for empty cells.
  std::vector<std::int64_t> argmax(n_cells * C, -1);
  Tensor out({n_cells, C}, feats.dtype());
  visit_dtype(feats.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto f = cv<T>(feats);
    auto o = out.span<T>();
    for (std::size_t r = 0; r < N; ++r) {
      const std::size_t base = static_cast<std::size_t>(cell_of_row[r]) * C;
      for (std::size_t c = 0; c < C; ++c) {
        const T v = f[r * C + c];
        // Strict comparison keeps the lowest row index on ties.
        if (argmax[base + c] < 0 || v > o[base + c]) {
          o[base + c] = v;
          argmax[base + c] = static_cast<std::int64_t>(r);
        }
      }
    }
  });
  return make_result(std::move(out), "scatter_max_pool", {feats}, [argmax = std::move(argmax), C](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto gf = gin<T>(self, 0);
      for (std::size_t i = 0; i < argmax.size(); ++i)
        if (argmax[i] >= 0) gf[static_cast<std::size_t>(argmax[i]) * C + i % C] += g[i];
    });
  });
}

Var scatter_rows(const Var& fill, const Var& rows, std::span<const std::int64_t> row_index, std::size_t n_rows) {
  detail::require_same_dtype("scatter_rows", fill, rows);
  if (fill.shape().size() != 1 || rows.shape().size() != 2 || rows.dim(1) != fill.dim(0) ||
      rows.dim(0) != row_index.size())
    detail::shape_error("scatter_rows", "fill " + to_string(fill.shape()) + ", rows " + to_string(rows.shape()) +
                                            ", " + std::to_string(row_index.size()) + " indices");
  const std::size_t D = fill.dim(0);
  std::vector<std::int64_t> source(n_rows, -1);
  for (std::size_t k = 0; k < row_index.size(); ++k) {
    const auto r = row_index[k];
    if (r < 0 || static_cast<std::size_t>(r) >= n_rows)
      detail::shape_error("scatter_rows", "row index " + std::to_string(r) + " outside [0," + std::to_string(n_rows) + ")");
    if (source[static_cast<std::size_t>(r)] >= 0)
      detail::shape_error("scatter_rows", "duplicate row index " + std::to_string(r));
    source[static_cast<std::size_t>(r)] = static_cast<std::int64_t>(k);
  }
  Tensor out({n_rows, D}, fill.dtype());
  visit_dtype(fill.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto fv = cv<T>(fill);
    auto rv = cv<T>(rows);
    auto o = out.span<T>();
    for (std::size_t r = 0; r < n_rows; ++r) {
      const T* src = source[r] >= 0 ? rv.data() + static_cast<std::size_t>(source[r]) * D : fv.data();
      std::copy_n(src, D, o.data() + r * D);
    }
  });
  return make_result(std::move(out), "scatter_rows", {fill, rows}, [source = std::move(source), D](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto gf = gin<T>(self, 0);
      auto gr = gin<T>(self, 1);
      for (std::size_t r = 0; r < source.size(); ++r) {
        const T* grow = g.data() + r * D;
        if (source[r] >= 0) {
          if (!gr.empty()) {
            T* dst = gr.data() + static_cast<std::size_t>(source[r]) * D;
            for (std::size_t c = 0; c < D; ++c) dst[c] += grow[c];
          }
        } else if (!gf.empty()) {
          for (std::size_t c = 0; c < D; ++c) gf[c] += grow[c];
        }
      }
    });
  });
}

Var embedding(const Var& table, std::span<const std::int64_t> ids, const Shape& id_shape) {
  if (table.shape().size() != 2) detail::shape_error("embedding", "table must be [V,D], got " + to_string(table.shape()));
  if (numel(id_shape) != ids.size())
    detail::shape_error("embedding", std::to_string(ids.size()) + " ids for shape " + to_string(id_shape));
  const std::size_t V = table.dim(0), D = table.dim(1);
  for (auto id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= V)
      detail::shape_error("embedding", "unknown token id " + std::to_string(id) + " for table of " + std::to_string(V));
  Shape out_shape = id_shape;
  out_shape.push_back(D);
  Tensor out(out_shape, table.dtype());
  std::vector<std::int64_t> idv(ids.begin(), ids.end());
  visit_dtype(table.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto tv = cv<T>(table);
    auto o = out.span<T>();
    for (std::size_t i = 0; i < idv.size(); ++i)
      std::copy_n(tv.data() + static_cast<std::size_t>(idv[i]) * D, D, o.data() + i * D);
  });
  return make_result(std::move(out), "embedding", {table}, [idv = std::move(idv), D](Node& self) {
    visit_dtype(self.value.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto g = gout<T>(self);
      auto gt = gin<T>(self, 0);
      for (std::size_t i = 0; i < idv.size(); ++i) {
        T* dst = gt.data() + static_cast<std::size_t>(idv[i]) * D;
        const T* src = g.data() + i * D;
        for (std::size_t c = 0; c < D; ++c) dst[c] += src[c];
      }
    });
  });
}

}  // namespace vqsf::ad
