#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <tuple>

#include "vqsf/common/error.hpp"
#include "vqsf/common/rng.hpp"
#include "vqsf/geo/sampling.hpp"
#include "vqsf/geo/voxel.hpp"
#include "vqsf/vqdif/trainer.hpp"

using namespace vqsf;
using namespace vqsf::vqdif;
using geo::PointCloud;

namespace {

VqdifConfig tiny_config(std::uint32_t R = 8) {
  VqdifConfig c;
  c.base_resolution = 16;
  c.R = R;
  c.point_dim = 8;
  c.D = 8;
  c.V = 16;
  c.unet_depth = 1;
  c.unet_channels = 8;
  c.upsample_stages = 1;
  c.upsample_channels = 8;
  c.mlp_hidden = 16;
  c.mlp_layers = 2;
  c.seed = 3;
  return c;
}

PointCloud random_cloud(Rng& rng, std::size_t n) {
  PointCloud c(n);
  for (auto& p : c) p = {rng.uniform(), rng.uniform(), rng.uniform()};
  return c;
}

// Points clustered in a handful of random blobs, so clouds are sparse at every R.
PointCloud blob_cloud(Rng& rng, std::size_t n) {
  std::vector<geo::Vec3> centres(1 + rng.below(5));
  for (auto& c : centres) c = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  PointCloud cloud(n);
  for (auto& p : cloud) {
    const auto& c = centres[rng.below(centres.size())];
    for (int a = 0; a < 3; ++a) p[a] = std::clamp(c[a] + rng.normal(0.0, 0.08), 0.0, 0.999);
  }
  return cloud;
}

std::size_t brute_voxel_count(const PointCloud& cloud, int r) {
  std::set<std::tuple<int, int, int>> cells;
  for (const auto& p : cloud)
    cells.insert({static_cast<int>(std::floor(p.x * r)), static_cast<int>(std::floor(p.y * r)),
                  static_cast<int>(std::floor(p.z * r))});
  return cells.size();
}

VqdifModel initialized_model(const VqdifConfig& cfg) {
  VqdifModel m(cfg);
  Rng rng(11);
  std::vector<double> e(cfg.V * cfg.D);
  for (auto& x : e) x = rng.normal();
  m.codebook().set_embeddings(e);
  return m;
}

VqdifBatch make_batch(Rng& rng, std::size_t B, std::size_t T) {
  VqdifBatch batch;
  batch.queries = ad::Tensor({B, T, 3});
  batch.occupancy = ad::Tensor({B, T});
  for (std::size_t b = 0; b < B; ++b) {
    auto shape = geo::make_shape(geo::ShapeKind::sphere, {}, 100 + b);
    batch.clouds.push_back(geo::sample_surface(shape, 256, 7 + b));
    auto targets = geo::sample_occupancy_targets(shape, T, {}, 9 + b);
    for (std::size_t t = 0; t < T; ++t) {
      for (int a = 0; a < 3; ++a) batch.queries.set((b * T + t) * 3 + a, targets.points[t][a]);
      batch.occupancy.set(b * T + t, targets.occupancy[t]);
    }
  }
  (void)rng;
  return batch;
}

}  // namespace

// ---- SparseSeq --------------------------------------------------------------

TEST(SparseSeq, ValidateRejectsBrokenInvariants) {
  SparseSeq s{8, 16, {{3, 1}, {5, 2}}};
  EXPECT_NO_THROW(s.validate());
  s.entries = {{5, 1}, {5, 2}};
  EXPECT_THROW(s.validate(), DataError);
  s.entries = {{512, 0}};
  EXPECT_THROW(s.validate(), DataError);
  s.entries = {{3, 16}};
  EXPECT_THROW(s.validate(), DataError);
}

TEST(SparseSeq, ByteSizeCountsBitsPerTuple) {
  // R=8: 9 bits per cell, V=256: 8 bits per code.
  SparseSeq s{8, 256, {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}, {6, 0}, {7, 0}}};
  EXPECT_DOUBLE_EQ(s.byte_size(), 17.0);
}

TEST(SparseSeq, FileRoundTripAndCorruption) {
  SparseSeq s{8, 256, {{0, 255}, {83, 7}, {511, 0}}};
  const auto path = std::filesystem::temp_directory_path() / "vqsf_seq_test.vqsq";
  write_sparse_seq(path, s);
  EXPECT_EQ(read_sparse_seq(path), s);

  auto bytes = encode_sparse_seq(s);
  EXPECT_EQ(bytes.size(), 4u + 2 + 4 + 2 + 4 + 3 * 8);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_sparse_seq(bad), DataError);
  bad = bytes;
  bad[4] = 9;  // version
  EXPECT_THROW(decode_sparse_seq(bad), DataError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_sparse_seq(bad), DataError);
  EXPECT_EQ(decode_sparse_seq(encode_sparse_seq(SparseSeq{8, 256, {}})).size(), 0u);
  std::filesystem::remove(path);
}

// ---- encoder ----------------------------------------------------------------

TEST(VqdifEncode, CellOneTwoThreeRavelsTo83) {
  auto model = initialized_model(tiny_config());
  PointCloud cloud{{1.5 / 8, 2.5 / 8, 3.5 / 8}, {1.2 / 8, 2.9 / 8, 3.1 / 8}};
  auto [seq, z] = model.encode(cloud);
  ASSERT_EQ(seq.size(), 1u);
  EXPECT_EQ(seq.entries[0].c, 83u);
  EXPECT_EQ(z.shape(), (ad::Shape{1, 8}));
}

TEST(VqdifEncode, LengthEqualsBruteForceVoxelCount) {
  Rng rng(5, Purpose::test, 1);
  for (std::uint32_t R : {4u, 8u, 16u}) {
    auto model = initialized_model(tiny_config(R));
    for (int trial = 0; trial < 10; ++trial) {
      const auto cloud = trial % 2 ? random_cloud(rng, 50 + rng.below(300)) : blob_cloud(rng, 500);
      auto [seq, z] = model.encode(cloud);
      EXPECT_EQ(seq.size(), brute_voxel_count(cloud, static_cast<int>(R))) << "R=" << R;
      EXPECT_NO_THROW(seq.validate());
      EXPECT_EQ(z.dim(0), seq.size());
    }
  }
}

TEST(VqdifEncode, FeatureDependsOnlyOnPointsInsideItsCell) {
  auto model = initialized_model(tiny_config());
  Rng rng(8);
  // cell A = [0.25,0.375)^3, far cell B near the opposite corner
  PointCloud a(40), b1(30), b2(35);
  for (auto& p : a) p = {rng.uniform(0.25, 0.375), rng.uniform(0.25, 0.375), rng.uniform(0.25, 0.375)};
  for (auto& p : b1) p = {rng.uniform(0.75, 0.875), rng.uniform(0.75, 0.875), rng.uniform(0.75, 0.875)};
  for (auto& p : b2) p = {rng.uniform(0.75, 0.875), rng.uniform(0.75, 0.875), rng.uniform(0.75, 0.875)};
  PointCloud c1 = a, c2 = a;
  c1.insert(c1.end(), b1.begin(), b1.end());
  c2.insert(c2.end(), b2.begin(), b2.end());
  auto [s1, z1] = model.encode(c1);
  auto [s2, z2] = model.encode(c2);
  ASSERT_EQ(s1.size(), 2u);
  ASSERT_EQ(s2.size(), 2u);
  ASSERT_EQ(s1.entries[0].c, s2.entries[0].c);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(z1.get(k), z2.get(k));
  bool differs = false;
  for (std::size_t k = 8; k < 16; ++k) differs |= z1.get(k) != z2.get(k);
  EXPECT_TRUE(differs);
}

TEST(VqdifEncode, BatchedEncodingMatchesSingle) {
  auto model = initialized_model(tiny_config());
  Rng rng(21);
  std::vector<PointCloud> clouds{blob_cloud(rng, 200), blob_cloud(rng, 150)};
  auto enc = model.encode_features(clouds);
  auto [seq1, z1] = model.encode(clouds[1]);
  ASSERT_EQ(enc.offsets.size(), 3u);
  ASSERT_EQ(enc.offsets[2] - enc.offsets[1], seq1.size());
  for (std::size_t i = 0; i < z1.numel(); ++i) EXPECT_EQ(enc.z.value().get(enc.offsets[1] * 8 + i), z1.get(i));
}

TEST(VqdifEncode, ErrorsOnEmptyCloudAndUntrainedCodebook) {
  auto model = initialized_model(tiny_config());
  EXPECT_THROW(model.encode(PointCloud{}), DataError);
  VqdifModel fresh(tiny_config());
  EXPECT_THROW(fresh.encode(PointCloud{{0.5, 0.5, 0.5}}), UsageError);
}

TEST(VqdifEncode, ShellLengthGrowsQuadratically) {
  auto sphere = geo::make_shape(geo::ShapeKind::sphere, {0.35, 0.5, 0.5, 0.5}, 0);
  const auto surface = geo::sample_surface(sphere, 60000, 1);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::uint32_t R : {4u, 8u, 16u, 32u}) {
    auto cfg = tiny_config(R);
    cfg.base_resolution = 32;
    auto model = initialized_model(cfg);
    const double x = std::log(R), y = std::log(static_cast<double>(model.encode(surface).first.size()));
    sx += x, sy += y, sxx += x * x, sxy += x * y, ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_NEAR(slope, 2.0, 0.3);
}

// ---- quantizer ---------------------------------------------------------------

TEST(Quantize, AnalyticExamples) {
  Codebook cb(2, 2);
  cb.set_embeddings({0, 0, 1, 1});
  EXPECT_EQ(cb.quantize(std::vector<double>{0.2, 0.1}), 0u);
  EXPECT_EQ(cb.quantize(std::vector<double>{1, 1}), 1u);
  EXPECT_EQ(cb.quantize(std::vector<double>{0.5, 0.5}), 0u);  // tie -> lowest index
  EXPECT_THROW(cb.quantize(std::vector<double>{std::nan(""), 0}), DataError);
}

TEST(Quantize, MatchesExhaustiveScan) {
  Rng rng(31);
  const std::size_t V = 64, D = 8;
  Codebook cb(V, D);
  std::vector<double> e(V * D);
  for (auto& x : e) x = rng.normal();
  cb.set_embeddings(e);
  for (int q = 0; q < 1000; ++q) {
    std::vector<double> z(D);
    for (auto& x : z) x = rng.normal();
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < V; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < D; ++k) d += (z[k] - e[j * D + k]) * (z[k] - e[j * D + k]);
      if (d < best_d) best_d = d, best = j;
    }
    ASSERT_EQ(cb.quantize(z), best);
  }
  // an exact hit on every entry
  for (std::size_t j = 0; j < V; ++j) EXPECT_EQ(cb.quantize(cb.entry(j)), j);
}

// ---- commitment loss ---------------------------------------------------------

TEST(Commitment, AnalyticValues) {
  ad::PrecisionScope f64(ad::DType::f64);
  Codebook cb(2, 2);
  cb.set_embeddings({0, 0, 3, 4});
  std::vector<std::uint32_t> one{0};
  ad::Var z(ad::Tensor::from({1, 2}, std::vector<double>{1, 0}), true);
  EXPECT_DOUBLE_EQ(commitment_loss(z, cb, one).item(), 1.0);
  std::vector<std::uint32_t> both{0, 1};
  ad::Var on(ad::Tensor::from({2, 2}, std::vector<double>{0, 0, 3, 4}), true);
  EXPECT_EQ(commitment_loss(on, cb, both).item(), 0.0);
}

TEST(Commitment, GradientMatchesFiniteDifferencesAndSkipsCodebook) {
  ad::PrecisionScope f64(ad::DType::f64);
  Rng rng(4);
  Codebook cb(4, 3);
  std::vector<double> e(12);
  for (auto& x : e) x = rng.normal();
  cb.set_embeddings(e);
  const std::size_t K = 5;
  std::vector<double> zv(K * 3);
  for (auto& x : zv) x = rng.normal();
  std::vector<std::uint32_t> codes{0, 3, 3, 1, 2};
  ad::Var z(ad::Tensor::from({K, 3}, zv), true);
  commitment_loss(z, cb, codes).backward();
  const double h = 1e-6;
  for (std::size_t i = 0; i < zv.size(); ++i) {
    auto at = [&](double d) {
      auto p = zv;
      p[i] += d;
      return commitment_loss(ad::Var(ad::Tensor::from({K, 3}, p)), cb, codes).item();
    };
    const double fd = (at(h) - at(-h)) / (2 * h);
    const double analytic = 2.0 * (zv[i] - e[codes[i / 3] * 3 + i % 3]) / K;
    EXPECT_NEAR(z.grad().get(i), fd, 1e-7);
    EXPECT_NEAR(z.grad().get(i), analytic, 1e-12);
  }
  // The codebook is not part of the graph: the table is untouched by backward.
  EXPECT_EQ(cb.embeddings(), e);
}

// ---- EMA --------------------------------------------------------------------

TEST(Ema, ZeroDecayGivesClusterMeans) {
  Codebook cb(3, 2, {0.0, 1e-5, 0});
  cb.set_embeddings({9, 9, 9, 9, 5, 5});
  ad::Tensor z = ad::Tensor::from({3, 2}, std::vector<double>{1, 2, 3, 4, 10, 10}, ad::DType::f64);
  std::vector<std::uint32_t> codes{0, 0, 1};
  auto counts = cb.ema_update(z, codes);
  EXPECT_EQ(counts, (std::vector<std::uint64_t>{2, 1, 0}));
  EXPECT_DOUBLE_EQ(cb.entry(0)[0], 2.0);
  EXPECT_DOUBLE_EQ(cb.entry(0)[1], 3.0);
  EXPECT_DOUBLE_EQ(cb.entry(1)[0], 10.0);
}

TEST(Ema, UnassignedEntryIsUnchanged) {
  Codebook cb(2, 2, {0.5, 1e-5, 0});
  cb.set_embeddings({1, 2, 3, 4});
  ad::Tensor z = ad::Tensor::from({1, 2}, std::vector<double>{7, 7}, ad::DType::f64);
  std::vector<std::uint32_t> codes{0};
  cb.ema_update(z, codes);
  EXPECT_DOUBLE_EQ(cb.entry(1)[0], 3.0);
  EXPECT_DOUBLE_EQ(cb.entry(1)[1], 4.0);
  EXPECT_DOUBLE_EQ(cb.counts()[1], 0.5);
  // entry 0: (0.5 * 1 + 0.5 * 7) / (0.5 + 0.5)
  EXPECT_DOUBLE_EQ(cb.entry(0)[0], 4.0);
}

TEST(Ema, ConvergesToClusterMeans) {
  Rng rng(12);
  const std::size_t V = 4, D = 3;
  Codebook cb(V, D, {0.9, 1e-5, 0});
  std::vector<double> e(V * D);
  for (auto& x : e) x = rng.normal(0, 5);
  cb.set_embeddings(e);
  std::vector<double> zv;
  std::vector<std::uint32_t> codes;
  std::vector<double> mu(V * D, 0.0), count(V, 0.0);
  for (int i = 0; i < 40; ++i) {
    const auto j = static_cast<std::uint32_t>(i % V);
    codes.push_back(j);
    for (std::size_t k = 0; k < D; ++k) {
      zv.push_back(rng.normal());
      mu[j * D + k] += zv.back();
    }
    count[j] += 1;
  }
  for (std::size_t j = 0; j < V; ++j)
    for (std::size_t k = 0; k < D; ++k) mu[j * D + k] /= count[j];
  ad::Tensor z = ad::Tensor::from({40, D}, zv, ad::DType::f64);
  for (int step = 0; step < 500; ++step) cb.ema_update(z, codes);
  for (std::size_t j = 0; j < V; ++j) {
    double d2 = 0;
    for (std::size_t k = 0; k < D; ++k) d2 += std::pow(cb.entry(j)[k] - mu[j * D + k], 2);
    EXPECT_LT(std::sqrt(d2), 1e-3);
  }
}

TEST(Ema, DeadEntriesAreReseededFromBatch) {
  Codebook cb(2, 1, {0.99, 1e-5, 3});
  cb.set_embeddings({0.0, 100.0});
  ad::Tensor z = ad::Tensor::from({1, 1}, std::vector<double>{0.5}, ad::DType::f64);
  std::vector<std::uint32_t> codes{0};
  Rng rng(1);
  for (int i = 0; i < 2; ++i) {
    cb.ema_update(z, codes);
    EXPECT_EQ(cb.reseed_dead(z, rng), 0u);
  }
  cb.ema_update(z, codes);
  EXPECT_EQ(cb.reseed_dead(z, rng), 1u);
  EXPECT_DOUBLE_EQ(cb.entry(1)[0], 0.5);
  EXPECT_EQ(cb.idle_steps()[1], 0u);
}

// ---- decoder and objective ---------------------------------------------------

TEST(VqdifDecode, EmptySequenceIsFiniteAndInUnitInterval) {
  auto model = initialized_model(tiny_config());
  SparseSeq empty{8, 16, {}};
  Rng rng(2);
  std::vector<geo::Vec3> q(500);
  for (auto& p : q) p = {rng.uniform(), rng.uniform(), rng.uniform()};
  q.push_back({0, 0, 0});
  q.push_back({geo::kUnitMax, geo::kUnitMax, geo::kUnitMax});
  for (double v : model.occupancy(empty, q)) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_NO_THROW(model.reconstruct(empty, 16));
  std::vector<geo::Vec3> outside{{0.5, 1.0, 0.5}};
  EXPECT_THROW(model.occupancy(empty, outside), DataError);
  EXPECT_THROW(model.occupancy(SparseSeq{4, 16, {}}, q), DataError);
}

TEST(VqdifLoss, ZeroBetaTotalEqualsBce) {
  auto model = initialized_model(tiny_config());
  Rng rng(3);
  auto batch = make_batch(rng, 2, 64);
  auto terms = model.loss(batch, 0.0);
  EXPECT_EQ(terms.total.item(), terms.bce.item());
  EXPECT_GT(terms.commit.item(), 0.0);
  auto weighted = model.loss(batch, 0.5);
  EXPECT_NEAR(weighted.total.item(), weighted.bce.item() + 0.5 * weighted.commit.item(), 1e-6);
}

TEST(VqdifLoss, GradientCrossesTheQuantizer) {
  auto model = initialized_model(tiny_config());
  Rng rng(4);
  auto batch = make_batch(rng, 2, 64);
  auto terms = model.loss(batch, 0.0);
  terms.total.backward();
  for (const auto& [name, p] : model.params().entries()) {
    if (name.rfind("encoder/", 0) != 0) continue;
    ASSERT_TRUE(p.has_grad()) << name;
    double norm = 0;
    for (std::size_t i = 0; i < p.grad().numel(); ++i) norm += std::abs(p.grad().get(i));
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(VqdifLoss, StraightThroughGradientMatchesFiniteDifferenceOfSurrogate) {
  // With the codes held fixed, the decoder input is z + (e - z) and the
  // straight-through gradient w.r.t. an encoder weight equals the finite
  // difference of the loss in which e_v is replaced by z (the surrogate).
  ad::PrecisionScope f64(ad::DType::f64);
  auto cfg = tiny_config();
  auto model = initialized_model(cfg);
  Rng rng(6);
  auto batch = make_batch(rng, 1, 32);
  batch.queries = batch.queries.cast(ad::DType::f64);
  auto enc = model.encode_features(batch.clouds);
  const auto codes = model.codebook().quantize_rows(enc.z.value());
  auto loss_with = [&](const ad::Var& zq, const std::vector<std::int64_t>& rows) {
    return ad::bce_with_logits(model.implicit_logits(model.decode_grid(zq, rows, 1), batch.queries), batch.occupancy);
  };
  auto terms = loss_with(ad::straight_through(enc.z, model.codebook().lookup(codes, ad::DType::f64)), enc.rows);
  terms.backward();
  ad::Var w = model.params().get("encoder/mlp1.0.weight");
  const double analytic = w.grad().get(0);
  // surrogate: decode the pre-quantization features directly, shifted by the frozen residual
  const ad::Tensor residual = [&] {
    auto r = model.codebook().lookup(codes, ad::DType::f64);
    for (std::size_t i = 0; i < r.numel(); ++i) r.set(i, r.get(i) - enc.z.value().get(i));
    return r;
  }();
  auto surrogate = [&](double d) {
    ad::NoGradScope ng;
    const double saved = w.value().get(0);
    w.mutable_value().set(0, saved + d);
    auto e2 = model.encode_features(batch.clouds);
    const double v = loss_with(ad::add(e2.z, ad::constant(residual)), e2.rows).item();
    w.mutable_value().set(0, saved);
    return v;
  };
  const double h = 1e-6;
  const double fd = (surrogate(h) - surrogate(-h)) / (2 * h);
  EXPECT_NE(analytic, 0.0);
  EXPECT_NEAR(analytic, fd, 1e-6 * std::max(1.0, std::abs(fd)));
}

// ---- persistence and training ------------------------------------------------

TEST(VqdifCheckpoint, SnapshotLoadRoundTrip) {
  auto model = initialized_model(tiny_config());
  const auto bytes = encode_checkpoint(model.snapshot());
  auto cfg = tiny_config();
  cfg.seed = 99;
  VqdifModel other(cfg);
  other.load(decode_checkpoint(bytes));
  EXPECT_EQ(encode_checkpoint(other.snapshot()), bytes);
  Rng rng(5);
  const auto cloud = blob_cloud(rng, 300);
  EXPECT_EQ(other.encode(cloud).first, model.encode(cloud).first);
  std::size_t meta = 0;
  for (const auto& t : model.snapshot()) {
    if (t.name == "vqdif/meta/R") {
      EXPECT_EQ(t.tensor.get(0), static_cast<double>(tiny_config().R));
      ++meta;
    } else if (t.name == "vqdif/meta/V") {
      EXPECT_EQ(t.tensor.get(0), static_cast<double>(tiny_config().V));
      ++meta;
    } else {
      EXPECT_TRUE(t.name.rfind("vqdif/encoder/", 0) == 0 || t.name.rfind("vqdif/decoder/", 0) == 0 ||
                  t.name.rfind("vqdif/codebook/", 0) == 0)
          << t.name;
    }
  }
  EXPECT_EQ(meta, 2u);
  auto wrong = tiny_config();
  wrong.D = 4;
  VqdifModel mismatched(wrong);
  EXPECT_THROW(mismatched.load(decode_checkpoint(bytes)), DataError);
}

TEST(VqdifTrainer, ResumeIsBitIdentical) {
  std::vector<TrainSample> data;
  for (int i = 0; i < 3; ++i) {
    auto s = geo::make_shape(geo::ShapeKind::box, {}, 40 + i);
    data.push_back({geo::sample_surface(s, 512, i), geo::sample_occupancy_targets(s, 512, {}, i)});
  }
  VqdifTrainOptions opt;
  opt.batch_size = 2;
  opt.points_per_cloud = 128;
  opt.queries_per_shape = 64;
  opt.seed = 8;
  VqdifModel a(tiny_config());
  VqdifTrainer ta(a, opt);
  ta.step(data);
  ta.step(data);
  const auto saved = encode_checkpoint(ta.snapshot());
  const auto next = ta.step(data);

  VqdifModel b(tiny_config());
  VqdifTrainer tb(b, opt);
  tb.load(decode_checkpoint(saved));
  EXPECT_EQ(tb.steps(), 2u);
  const auto resumed = tb.step(data);
  EXPECT_EQ(resumed.total, next.total);
  EXPECT_EQ(resumed.bce, next.bce);
  EXPECT_EQ(encode_checkpoint(tb.snapshot()), encode_checkpoint(ta.snapshot()));
}

TEST(VqdifTrainer, LossDecreasesOnASingleShape) {
  auto s = geo::make_shape(geo::ShapeKind::sphere, {0.3, 0.5, 0.5, 0.5}, 0);
  std::vector<TrainSample> data{{geo::sample_surface(s, 1024, 1), geo::sample_occupancy_targets(s, 4096, {}, 2)}};
  VqdifTrainOptions opt;
  opt.batch_size = 1;
  opt.points_per_cloud = 256;
  opt.queries_per_shape = 256;
  opt.lr = 3e-3;
  VqdifModel model(tiny_config());
  VqdifTrainer trainer(model, opt);
  double first = 0, last = 0;
  for (int i = 0; i < 150; ++i) {
    const double l = trainer.step(data).bce;
    if (i < 10) first += l / 10;
    if (i >= 140) last += l / 10;
  }
  EXPECT_LT(last, 0.6 * first);
}
