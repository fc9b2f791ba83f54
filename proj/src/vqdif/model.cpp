#include "vqsf/vqdif/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "vqsf/common/error.hpp"
#include "vqsf/geo/voxel.hpp"

namespace vqsf::vqdif {

using ad::Conv3d;
using ad::Linear;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

bool power_of_two(std::uint64_t n) { return n != 0 && std::has_single_bit(n); }

std::size_t log2_exact(std::uint64_t n) { return static_cast<std::size_t>(std::countr_zero(n)); }

Var mlp(const std::vector<Linear>& layers, Var x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](x);
    if (i + 1 < layers.size()) x = ad::relu(x);
  }
  return x;
}

constexpr std::size_t kQueryChunk = 16384;

}  // namespace

void VqdifConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("vqdif config: " + what); };
  if (!power_of_two(R) || !power_of_two(base_resolution)) fail("R and base_resolution must be powers of two");
  if (base_resolution < R) fail("base_resolution must be at least R");
  if (R > 32 || base_resolution > 128) fail("resolutions above R=32 / base 128 are not supported");
  if (point_dim == 0 || D == 0 || V == 0) fail("point_dim, D and V must be positive");
  if (unet_channels == 0 || mlp_hidden == 0 || mlp_layers == 0) fail("decoder sizes must be positive");
  if (upsample_stages > 0 && upsample_channels == 0) fail("upsample_channels must be positive");
  if ((R >> unet_depth) == 0) fail("unet_depth too large for R");
  if (!(codebook.decay >= 0.0 && codebook.decay <= 1.0)) fail("codebook decay must lie in [0, 1]");
  if (!(codebook.epsilon > 0.0)) fail("codebook epsilon must be positive");
}

VqdifModel::VqdifModel(const VqdifConfig& config) : config_(config) {
  config_.validate();
  codebook_ = Codebook(config_.V, config_.D, config_.codebook);
  Rng rng(config_.seed, Purpose::init, 0);
  const std::size_t P = config_.point_dim, D = config_.D;

  mlp1_ = {Linear(params_, "encoder/mlp1.0", 3, P, rng), Linear(params_, "encoder/mlp1.1", P, P, rng)};
  mlp2_ = {Linear(params_, "encoder/mlp2.0", 2 * P, P, rng), Linear(params_, "encoder/mlp2.1", P, P, rng)};
  // kernel == stride everywhere: each output cell sees exactly its own input block
  const std::size_t stages = log2_exact(config_.base_resolution / config_.R);
  if (stages == 0) {
    down_.emplace_back(params_, "encoder/down.0", P, D, 1, ad::Conv3dOptions{1, 0}, rng, 1.0);
  } else {
    for (std::size_t s = 0; s < stages; ++s) {
      const bool last = s + 1 == stages;
      down_.emplace_back(params_, "encoder/down." + std::to_string(s), P, last ? D : P, 2, ad::Conv3dOptions{2, 0},
                         rng, last ? 1.0 : std::sqrt(2.0));
    }
  }

  empty_ = params_.add("decoder/empty", Tensor::zeros({D}));
  auto ch = [&](std::size_t level) { return config_.unet_channels << level; };
  unet_in_ = Conv3d(params_, "decoder/unet.in", D, ch(0), 3, {1, 1}, rng);
  for (std::size_t l = 1; l <= config_.unet_depth; ++l) {
    const std::string n = std::to_string(l);
    unet_down_.emplace_back(params_, "decoder/unet.down" + n, ch(l - 1), ch(l), 2, ad::Conv3dOptions{2, 0}, rng);
    unet_mid_.emplace_back(params_, "decoder/unet.mid" + n, ch(l), ch(l), 3, ad::Conv3dOptions{1, 1}, rng);
    unet_up_.emplace_back(params_, "decoder/unet.up" + n, ch(l) + ch(l - 1), ch(l - 1), 3, ad::Conv3dOptions{1, 1},
                          rng);
  }
  std::size_t c = ch(0);
  for (std::size_t s = 0; s < config_.upsample_stages; ++s) {
    upsample_.emplace_back(params_, "decoder/upsample." + std::to_string(s), c, config_.upsample_channels, 3,
                           ad::Conv3dOptions{1, 1}, rng);
    c = config_.upsample_channels;
  }
  std::size_t in = c + 3;
  for (std::size_t i = 0; i < config_.mlp_layers; ++i) {
    mlp_.emplace_back(params_, "decoder/mlp." + std::to_string(i), in, config_.mlp_hidden, rng);
    in = config_.mlp_hidden;
  }
  mlp_.emplace_back(params_, "decoder/mlp." + std::to_string(config_.mlp_layers), in, 1, rng, 1.0);
}

EncodedFeatures VqdifModel::encode_features(std::span<const geo::PointCloud> clouds) const {
  const std::uint32_t G = config_.base_resolution, R = config_.R;
  const auto dt = empty_.dtype();
  std::size_t n_points = 0;
  for (const auto& c : clouds) {
    if (c.empty()) throw DataError("encode: empty point cloud");
    n_points += c.size();
  }

  // Keys are b * r^3 + ravel(cell, r) at the current resolution r.
  Tensor local({n_points, 3}, dt);
  std::vector<std::int64_t> point_key(n_points);
  std::size_t i = 0;
  for (std::size_t b = 0; b < clouds.size(); ++b) {
    for (const auto& p : clouds[b]) {
      const auto cell = geo::cell_of(p, G);
      point_key[i] = static_cast<std::int64_t>(b * G * G * G + geo::ravel(cell[0], cell[1], cell[2], G));
      for (int a = 0; a < 3; ++a) {
        const double t = p[a] * R;
        local.set(i * 3 + static_cast<std::size_t>(a), 2.0 * (t - std::floor(t)) - 1.0);
      }
      ++i;
    }
  }
  std::vector<std::int64_t> keys = point_key;
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  auto slot_of = [](const std::vector<std::int64_t>& sorted, std::int64_t key) {
    return static_cast<std::int64_t>(std::lower_bound(sorted.begin(), sorted.end(), key) - sorted.begin());
  };
  std::vector<std::int64_t> point_slot(n_points);
  for (std::size_t k = 0; k < n_points; ++k) point_slot[k] = slot_of(keys, point_key[k]);

  // local-pooled point features on the occupied base cells
  Var h1 = mlp(mlp1_, Var(local));
  Var pooled = ad::scatter_max_pool(h1, point_slot, keys.size());
  Var parts[] = {h1, ad::embedding(pooled, point_slot, {n_points})};
  Var h = ad::scatter_max_pool(mlp(mlp2_, ad::concat(parts, 1)), point_slot, keys.size());

  // Kernel == stride convolutions evaluated on occupied cells only: each
  // parent gathers its 8 children (absent ones read an appended zero row), so
  // the result equals the dense convolution of the zero-filled grid.
  std::uint32_t r = G;
  for (std::size_t s = 0; s < down_.size(); ++s) {
    const auto& conv = down_[s];
    const std::size_t cin = conv.weight.dim(3), cout = conv.weight.dim(4);
    if (r == R) {  // 1x1 projection when the base grid already is the feature grid
      h = ad::add(ad::matmul(h, ad::reshape(conv.weight, {cin, cout})), conv.bias);
      break;
    }
    const std::uint32_t rp = r / 2;
    const std::uint64_t r3 = std::uint64_t{r} * r * r, rp3 = std::uint64_t{rp} * rp * rp;
    auto parent_of = [&](std::int64_t key) {
      const auto b = static_cast<std::uint64_t>(key) / r3;
      const auto c = geo::unravel(static_cast<std::uint32_t>(static_cast<std::uint64_t>(key) % r3), r);
      return static_cast<std::int64_t>(b * rp3 + geo::ravel(c[0] / 2, c[1] / 2, c[2] / 2, rp));
    };
    std::vector<std::int64_t> parents;
    for (auto k : keys) parents.push_back(parent_of(k));
    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
    std::sort(parents.begin(), parents.end());
    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());

    const auto zero_row = static_cast<std::int64_t>(keys.size());
    std::vector<std::int64_t> child(parents.size() * 8, zero_row);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const auto c = geo::unravel(static_cast<std::uint32_t>(static_cast<std::uint64_t>(keys[k]) % r3), r);
      const auto pslot = static_cast<std::size_t>(slot_of(parents, parent_of(keys[k])));
      const std::size_t tap = (c[0] % 2) * 4 + (c[1] % 2) * 2 + c[2] % 2;
      child[pslot * 8 + tap] = static_cast<std::int64_t>(k);
    }
    Var rows[] = {h, ad::constant(Tensor({1, cin}, dt))};
    Var gathered = ad::reshape(ad::embedding(ad::concat(rows, 0), child, {parents.size(), 8}),
                               {parents.size(), 8 * cin});
    h = ad::add(ad::matmul(gathered, ad::reshape(conv.weight, {8 * cin, cout})), conv.bias);
    if (s + 1 < down_.size()) h = ad::relu(h);
    keys = std::move(parents);
    r = rp;
  }

  EncodedFeatures out;
  out.batch = clouds.size();
  out.z = h;
  out.rows = keys;
  const std::uint64_t R3 = std::uint64_t{R} * R * R;
  out.offsets.assign(clouds.size() + 1, 0);
  for (auto k : keys) ++out.offsets[static_cast<std::size_t>(static_cast<std::uint64_t>(k) / R3) + 1];
  for (std::size_t b = 0; b < clouds.size(); ++b) out.offsets[b + 1] += out.offsets[b];
  return out;
}

std::pair<SparseSeq, Tensor> VqdifModel::encode(const geo::PointCloud& cloud) const {
  if (!codebook_.initialized()) throw UsageError("encode: codebook has not been trained");
  ad::NoGradScope no_grad;
  auto enc = encode_features(std::span<const geo::PointCloud>(&cloud, 1));
  Tensor z = enc.z.value();
  const auto codes = codebook_.quantize_rows(z);
  SparseSeq seq;
  seq.R = config_.R;
  seq.V = config_.V;
  seq.entries.reserve(codes.size());
  for (std::size_t k = 0; k < codes.size(); ++k)
    seq.entries.push_back({static_cast<std::uint32_t>(enc.rows[k]), codes[k]});
  return {std::move(seq), std::move(z)};
}

Var VqdifModel::decode_grid(const Var& zq, std::span<const std::int64_t> rows, std::size_t batch) const {
  const std::size_t R = config_.R;
  Var x = ad::scatter_rows(empty_, zq, rows, batch * R * R * R);
  x = ad::reshape(x, {batch, R, R, R, config_.D});
  std::vector<Var> skips{ad::relu(unet_in_(x))};
  for (std::size_t l = 0; l < unet_down_.size(); ++l) {
    Var d = ad::relu(unet_down_[l](skips.back()));
    skips.push_back(ad::relu(unet_mid_[l](d)));
  }
  Var y = skips.back();
  for (std::size_t l = unet_up_.size(); l-- > 0;) {
    Var parts[] = {ad::upsample2x(y), skips[l]};
    y = ad::relu(unet_up_[l](ad::concat(parts, 4)));
  }
  for (const auto& up : upsample_) y = ad::relu(up(ad::upsample2x(y)));
  return y;
}

Var VqdifModel::implicit_logits(const Var& grid, const Tensor& queries) const {
  if (queries.rank() != 3 || queries.dim(2) != 3 || queries.dim(0) != grid.dim(0))
    throw DataError("decode: queries must be [B, T, 3], got " + ad::to_string(queries.shape()));
  Tensor centred(queries.shape(), grid.dtype());
  for (std::size_t i = 0; i < queries.numel(); ++i) {
    const double q = queries.get(i);
    if (!(q >= 0.0 && q < 1.0)) throw DataError("decode: query coordinate " + std::to_string(q) + " outside [0,1)");
    centred.set(i, 2.0 * q - 1.0);
  }
  Var feats = ad::trilinear_sample(grid, queries.dtype() == grid.dtype() ? queries : queries.cast(grid.dtype()));
  Var parts[] = {feats, Var(centred)};
  Var logit = mlp(mlp_, ad::concat(parts, 2));
  return ad::reshape(logit, {queries.dim(0), queries.dim(1)});
}

Var commitment_loss(const Var& z, const Codebook& codebook, std::span<const std::uint32_t> codes) {
  if (z.shape().size() != 2 || z.dim(0) != codes.size() || z.dim(1) != codebook.dim())
    throw DataError("commitment loss: features " + ad::to_string(z.shape()) + " do not match codes");
  if (codes.empty()) throw DataError("commitment loss: no features");
  Var diff = ad::sub(z, ad::constant(codebook.lookup(codes, z.dtype())));
  return ad::scale(ad::sum(ad::mul(diff, diff)), 1.0 / static_cast<double>(codes.size()));
}

LossTerms VqdifModel::loss(const VqdifBatch& batch, double beta) {
  if (beta < 0.0) throw UsageError("vqdif loss: beta must be non-negative");
  const std::size_t B = batch.clouds.size();
  if (B == 0) throw DataError("vqdif loss: empty batch");
  if (batch.occupancy.shape() != Shape{B, batch.queries.dim(1)})
    throw DataError("vqdif loss: occupancy targets " + ad::to_string(batch.occupancy.shape()) +
                    " do not match queries " + ad::to_string(batch.queries.shape()));

  auto enc = encode_features(batch.clouds);
  LossTerms out;
  out.z = enc.z.value();
  if (!codebook_.initialized()) {
    Rng rng(config_.seed, Purpose::init, 1);
    codebook_.data_init(out.z, rng);
  }
  out.codes = codebook_.quantize_rows(out.z);
  Var zq = ad::straight_through(enc.z, codebook_.lookup(out.codes, enc.z.dtype()));
  Var grid = decode_grid(zq, enc.rows, B);
  Var logits = implicit_logits(grid, batch.queries);
  out.bce = ad::bce_with_logits(logits, batch.occupancy.cast(logits.dtype()));
  out.commit = commitment_loss(enc.z, codebook_, out.codes);
  out.total = beta == 0.0 ? out.bce : ad::add(out.bce, ad::scale(out.commit, beta));
  return out;
}

void VqdifModel::check_sequence(const SparseSeq& seq) const {
  seq.validate();
  if (seq.R != config_.R || seq.V != config_.V)
    throw DataError("sequence has R=" + std::to_string(seq.R) + ", V=" + std::to_string(seq.V) + "; model has R=" +
                    std::to_string(config_.R) + ", V=" + std::to_string(config_.V));
}

std::vector<double> VqdifModel::occupancy(const SparseSeq& seq, std::span<const geo::Vec3> points) const {
  check_sequence(seq);
  ad::NoGradScope no_grad;
  std::vector<std::uint32_t> codes;
  std::vector<std::int64_t> rows;
  for (const auto& t : seq.entries) {
    codes.push_back(t.v);
    rows.push_back(t.c);
  }
  const auto dt = empty_.dtype();
  Var grid = decode_grid(Var(codebook_.lookup(codes, dt)), rows, 1);
  std::vector<double> out;
  out.reserve(points.size());
  for (std::size_t start = 0; start < points.size(); start += kQueryChunk) {
    const std::size_t n = std::min(kQueryChunk, points.size() - start);
    Tensor q({1, n, 3}, dt);
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a) q.set(i * 3 + static_cast<std::size_t>(a), points[start + i][a]);
    const Tensor logits = implicit_logits(grid, q).value();
    for (std::size_t i = 0; i < n; ++i) {
      const double l = logits.get(i);
      out.push_back(l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l)));
    }
  }
  return out;
}

std::vector<float> VqdifModel::occupancy_grid(const SparseSeq& seq, std::size_t resolution) const {
  if (resolution < 2) throw UsageError("reconstruct: grid resolution must be at least 2");
  std::vector<geo::Vec3> pts;
  pts.reserve(resolution * resolution * resolution);
  const double h = 1.0 / static_cast<double>(resolution);
  for (std::size_t x = 0; x < resolution; ++x)
    for (std::size_t y = 0; y < resolution; ++y)
      for (std::size_t z = 0; z < resolution; ++z) pts.push_back({(x + 0.5) * h, (y + 0.5) * h, (z + 0.5) * h});
  const auto occ = occupancy(seq, pts);
  return {occ.begin(), occ.end()};
}

geo::Mesh VqdifModel::reconstruct(const SparseSeq& seq, std::size_t resolution) const {
  const auto values = occupancy_grid(seq, resolution);
  return geo::marching_cubes(values, resolution, 0.5);
}

std::vector<NamedTensor> VqdifModel::snapshot() const {
  auto out = params_.snapshot("vqdif/");
  for (auto& t : codebook_.snapshot("vqdif/codebook/")) out.push_back(std::move(t));
  out.push_back({"vqdif/meta/R", ad::Tensor::scalar(config_.R, ad::DType::f64)});
  out.push_back({"vqdif/meta/V", ad::Tensor::scalar(config_.V, ad::DType::f64)});
  return out;
}

void VqdifModel::load(const std::vector<NamedTensor>& tensors) {
  const auto R = static_cast<std::uint32_t>(find_tensor(tensors, "vqdif/meta/R").item());
  const auto V = static_cast<std::uint32_t>(find_tensor(tensors, "vqdif/meta/V").item());
  if (R != config_.R || V != config_.V)
    throw DataError("vqdif checkpoint has R=" + std::to_string(R) + ", V=" + std::to_string(V) +
                    " but the configuration has R=" + std::to_string(config_.R) + ", V=" + std::to_string(config_.V));
  params_.load(tensors, "vqdif/");
  codebook_.load(tensors, "vqdif/codebook/");
}

}  // namespace vqsf::vqdif
