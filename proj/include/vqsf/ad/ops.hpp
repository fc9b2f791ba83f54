#pragma once

#include <cstdint>
#include <span>

#include "vqsf/ad/var.hpp"

namespace vqsf::ad {

// Wraps a tensor as a graph constant.
Var constant(Tensor value);

// Elementwise ops. `b` may have the same shape as `a`, be a suffix of a's
// shape (broadcast over leading axes, e.g. a bias), or be a single element.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);

// Forward value is `target` exactly; backward passes the gradient to z as if
// the op were the identity (straight-through estimator).
Var straight_through(const Var& z, const Tensor& target);

Var relu(const Var& a);  // subgradient 0 at 0
Var sigmoid(const Var& a);

// a [..., K] x w [K, N] -> [..., N].
Var matmul(const Var& a, const Var& w);
// Batched: a [B, M, K] x b [B, K, N] -> [B, M, N]; with transpose_b, b is [B, N, K].
Var bmm(const Var& a, const Var& b, bool transpose_b = false);

struct Conv3dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
};
// Channel-last 3D convolution. x [B, X, Y, Z, Cin], w [k, k, k, Cin, Cout],
// bias [Cout] or undefined. Output extent = floor((in + 2 pad - k) / stride) + 1.
Var conv3d(const Var& x, const Var& w, const Var& bias, Conv3dOptions options = {});
// Nearest-neighbour 2x upsampling of [B, X, Y, Z, C].
Var upsample2x(const Var& grid);
// Trilinear interpolation of grid [B, X, Y, Z, C] at points [B, T, 3] in
// [0,1)^3, with cell i centred at (i + 0.5) / extent and border clamping.
// Gradient flows to the grid only.
Var trilinear_sample(const Var& grid, const Tensor& points);

// Max-pools rows of feats [N, C] into n_cells cells; row r goes to cell
// cell_of_row[r]. Empty cells are 0. Ties resolve to the lowest row index.
Var scatter_max_pool(const Var& feats, std::span<const std::int64_t> cell_of_row, std::size_t n_cells);
// Builds [n_rows, D] where row row_index[k] = rows[k] and every other row is `fill` [D].
Var scatter_rows(const Var& fill, const Var& rows, std::span<const std::int64_t> row_index, std::size_t n_rows);
// Gathers table [V, D] rows; output shape is id_shape + [D].
Var embedding(const Var& table, std::span<const std::int64_t> ids, const Shape& id_shape);

Var softmax(const Var& a);  // over the last axis
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Mean binary cross-entropy of sigmoid(logits) against targets in {0,1}.
Var bce_with_logits(const Var& logits, const Tensor& targets);
// sum_i weights[i] * -log softmax(logits[i])[targets[i]] for logits [N, C];
// rows with a negative target are skipped.
Var cross_entropy(const Var& logits, std::span<const std::int64_t> targets, std::span<const double> weights);

Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, std::span<const std::size_t> perm);
Var concat(std::span<const Var> parts, std::size_t axis);
// Elements where mask != 0 are replaced by `value` (and receive no gradient).
Var masked_fill(const Var& a, std::span<const std::uint8_t> mask, double value);

Var sum(const Var& a);
Var mean(const Var& a);

}  // namespace vqsf::ad
