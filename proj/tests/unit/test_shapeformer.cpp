#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "vqsf/common/error.hpp"
#include "vqsf/sf/model.hpp"

using namespace vqsf;
using namespace vqsf::sf;
using vqdif::SparseSeq;

namespace {

TransformerConfig tiny(std::uint64_t seed = 1) {
  TransformerConfig c;
  c.R = 4;
  c.V = 8;
  c.n_blocks_coord = 2;
  c.n_blocks_value = 1;
  c.n_heads = 2;
  c.embed_dim = 16;
  c.max_seq_len = 48;
  c.seed = seed;
  return c;
}

SparseSeq random_seq(Rng& rng, std::uint32_t R, std::uint32_t V, std::size_t k) {
  SparseSeq s{R, V, {}};
  std::vector<std::uint32_t> cells(R * R * R);
  std::iota(cells.begin(), cells.end(), 0u);
  rng.shuffle(std::span<std::uint32_t>(cells));
  cells.resize(k);
  std::sort(cells.begin(), cells.end());
  for (auto c : cells) s.entries.push_back({c, static_cast<std::uint32_t>(rng.below(V))});
  return s;
}

TokenStream plain_stream(const SparseSeq& p, const SparseSeq& c, std::size_t max_len = 48) {
  Rng unused(0);
  return build_training_sequence(p, c, 0.0, unused, max_len);
}

void zero_param(ShapeFormer& m, const std::string& name) { m.params().get(name).mutable_value().zero(); }

}  // namespace

// ---- token streams ------------------------------------------------------------

TEST(TokenStream, LayoutAndLossMaskCounts) {
  SparseSeq p{4, 8, {{1, 2}, {7, 3}}}, c{4, 8, {{0, 1}, {5, 5}, {9, 0}}};
  auto s = plain_stream(p, c);
  ASSERT_EQ(s.size(), 7u);
  EXPECT_EQ(s.loss_positions(), 4u);
  const auto end = s.vocab.end_c();
  EXPECT_EQ(s.coord, (std::vector<std::int64_t>{1, 7, end, 0, 5, 9, end}));
  EXPECT_EQ(s.value, (std::vector<std::int64_t>{2, 3, 8, 1, 5, 0, 8}));
  EXPECT_EQ(s.loss_mask, (std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 0}));
  EXPECT_EQ(s.target_c, (std::vector<std::int64_t>{-1, -1, 0, 5, 9, end, -1}));
  EXPECT_EQ(s.target_v, (std::vector<std::int64_t>{-1, -1, 1, 5, 0, -1, -1}));
  EXPECT_EQ(s.next_coord, (std::vector<std::int64_t>{7, end, 0, 5, 9, end, end}));
  EXPECT_EQ(s.partial_end(), 2u);
  EXPECT_EQ(s.segment[2], Segment::partial);
  EXPECT_EQ(s.segment[3], Segment::complete);
}

TEST(TokenStream, FullMaskingLeavesOnlyTheEnd) {
  Rng rng(1);
  SparseSeq p = random_seq(rng, 4, 8, 6), c = random_seq(rng, 4, 8, 3);
  auto s = build_training_sequence(p, c, 1.0, rng, 48);
  EXPECT_EQ(s.size(), 1u + 3 + 1);
  EXPECT_EQ(s.coord[0], s.vocab.end_c());
}

TEST(TokenStream, MaskingKeepsBinomialFraction) {
  Rng rng(2);
  SparseSeq p = random_seq(rng, 4, 8, 10), c = random_seq(rng, 4, 8, 2);
  double kept = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) kept += static_cast<double>(build_training_sequence(p, c, 0.3, rng, 48).partial_end());
  EXPECT_NEAR(kept / trials, 7.0, 0.15);
}

TEST(TokenStream, RejectsOverlongAndMismatchedSequences) {
  Rng rng(3);
  SparseSeq p = random_seq(rng, 4, 8, 20), c = random_seq(rng, 4, 8, 20);
  EXPECT_THROW(build_training_sequence(p, c, 0.0, rng, 41), DataError);
  EXPECT_NO_THROW(build_training_sequence(p, c, 0.0, rng, 42));
  SparseSeq other{8, 8, {}};
  EXPECT_THROW(build_training_sequence(other, c, 0.0, rng, 48), DataError);
}

// ---- forward ------------------------------------------------------------------

TEST(ShapeFormerForward, SingleTokenAttentionIsValueProjection) {
  ad::ParamStore store;
  Rng rng(4);
  CausalSelfAttention attn(store, "a", 8, 2, rng);
  ad::Tensor x({1, 8});
  for (std::size_t i = 0; i < 8; ++i) x.set(i, rng.normal());
  ad::Var xv(x);
  const auto got = attn.attend(xv).value();
  const auto want = attn.v(xv).value();
  for (std::size_t i = 0; i < 8; ++i) EXPECT_FLOAT_EQ(got.get(i), want.get(i));
}

TEST(ShapeFormerForward, DistributionsAreNormalized) {
  ShapeFormer m(tiny());
  Rng rng(5);
  auto s = plain_stream(random_seq(rng, 4, 8, 5), random_seq(rng, 4, 8, 7));
  for (const auto& d : m.distributions(s)) {
    EXPECT_NEAR(std::accumulate(d.p_c.begin(), d.p_c.end(), 0.0), 1.0, 1e-6);
    EXPECT_NEAR(std::accumulate(d.p_v.begin(), d.p_v.end(), 0.0), 1.0, 1e-6);
    for (double x : d.p_c) EXPECT_GE(x, 0.0);
  }
}

TEST(ShapeFormerForward, CausalMaskHidesTheFuture) {
  ShapeFormer m(tiny());
  Rng rng(6);
  auto base = plain_stream(random_seq(rng, 4, 8, 6), random_seq(rng, 4, 8, 8));
  const auto ref = m.distributions(base);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t j = 1 + rng.below(base.size() - 1);
    auto s = base;
    s.value[j] = (s.value[j] + 1 + static_cast<std::int64_t>(rng.below(7))) % 9;  // input embedding at j only
    const auto got = m.distributions(s);
    for (std::size_t i = 0; i < j; ++i) {
      EXPECT_EQ(got[i].p_c, ref[i].p_c) << "i=" << i << " j=" << j;
      EXPECT_EQ(got[i].p_v, ref[i].p_v) << "i=" << i << " j=" << j;
    }
    EXPECT_NE(got[j].p_c, ref[j].p_c);
  }
}

TEST(ShapeFormerForward, ValueDependsOnTheCurrentCoordinateOnly) {
  ShapeFormer m(tiny());
  Rng rng(7);
  auto base = plain_stream(random_seq(rng, 4, 8, 4), random_seq(rng, 4, 8, 6));
  const auto ref = m.distributions(base);
  const std::size_t j = base.partial_end() + 3;  // a complete-segment tuple
  auto s = base;
  s.coord[j] = (s.coord[j] + 17) % 64;
  s.next_coord[j - 1] = s.coord[j];
  const auto got = m.distributions(s);
  // p_c at j-1 was predicted before c_j existed; p_v at j-1 is conditioned on it
  EXPECT_EQ(got[j - 1].p_c, ref[j - 1].p_c);
  EXPECT_NE(got[j - 1].p_v, ref[j - 1].p_v);
  for (std::size_t i = 0; i + 1 < j; ++i) EXPECT_EQ(got[i].p_v, ref[i].p_v);
}

TEST(ShapeFormerForward, RejectsUnknownTokens) {
  ShapeFormer m(tiny());
  auto s = plain_stream(SparseSeq{4, 8, {{1, 1}}}, SparseSeq{4, 8, {{2, 2}}});
  s.coord[0] = 999;
  EXPECT_THROW(m.distributions(s), DataError);
  s.coord[0] = 1;
  s.value[0] = 9;
  EXPECT_THROW(m.distributions(s), DataError);
}

// ---- nll -----------------------------------------------------------------------

TEST(ShapeFormerNll, UniformHeadsGiveLogVocabulary) {
  ShapeFormer m(tiny());
  for (auto name : {"coord_head.1.weight", "coord_head.1.bias", "value_head.1.weight", "value_head.1.bias"})
    zero_param(m, name);
  // one tuple plus END: (ln n_c + ln n_v + ln n_c) / 2
  auto s = plain_stream(SparseSeq{4, 8, {}}, SparseSeq{4, 8, {{3, 4}}});
  const double nc = std::log(65.0), nv = std::log(8.0);
  EXPECT_NEAR(m.nll(s).item(), (2 * nc + nv) / 2, 1e-5);
}

TEST(ShapeFormerNll, ConfidentCorrectPredictionGivesZero) {
  ShapeFormer m(tiny());
  zero_param(m, "coord_head.1.weight");
  auto bias = m.params().get("coord_head.1.bias");
  bias.mutable_value().zero();
  bias.mutable_value().set(64, 200.0);  // END
  auto s = plain_stream(SparseSeq{4, 8, {{5, 1}}}, SparseSeq{4, 8, {}});
  ASSERT_EQ(s.loss_positions(), 1u);
  EXPECT_NEAR(m.nll(s).item(), 0.0, 1e-30);
}

TEST(ShapeFormerNll, GradientMatchesFiniteDifferences) {
  ad::PrecisionScope f64(ad::DType::f64);
  ShapeFormer m(tiny(9));
  Rng rng(8);
  auto s = plain_stream(random_seq(rng, 4, 8, 3), random_seq(rng, 4, 8, 4));
  m.nll(s).backward();
  for (auto name : {"coord_embed", "pos_embed", "coord_blocks.0.attn.q.weight", "value_blocks.0.fc1.weight",
                    "next_coord_embed", "value_head.1.bias", "coord_ln.gamma"}) {
    ad::Var p = m.params().get(name);
    for (int trial = 0; trial < 4; ++trial) {
      const std::size_t i = rng.below(p.numel());
      const double saved = p.value().get(i), h = 1e-6;
      auto at = [&](double d) {
        p.mutable_value().set(i, saved + d);
        ad::NoGradScope ng;
        return m.nll(s).item();
      };
      const double fd = (at(h) - at(-h)) / (2 * h);
      p.mutable_value().set(i, saved);
      const double g = p.has_grad() ? p.grad().get(i) : 0.0;
      EXPECT_LE(std::abs(g - fd), 1e-5 * std::max(1.0, std::abs(fd))) << name << "[" << i << "]";
    }
  }
}

TEST(ShapeFormerNll, RejectsStreamWithoutLossPositions) {
  ShapeFormer m(tiny());
  EXPECT_THROW(m.nll(build_prefix(SparseSeq{4, 8, {{1, 1}}}, 48)), DataError);
}

// ---- top-p ---------------------------------------------------------------------

TEST(TopP, AnalyticExamples) {
  const std::vector<double> p{0.5, 0.3, 0.2};
  EXPECT_EQ(top_p_filter(p, 0.4), (std::vector<double>{1, 0, 0}));
  auto two = top_p_filter(p, 0.75);
  EXPECT_NEAR(two[0], 0.625, 1e-12);
  EXPECT_NEAR(two[1], 0.375, 1e-12);
  EXPECT_EQ(two[2], 0.0);
  EXPECT_EQ(top_p_filter(p, 0.0), (std::vector<double>{1, 0, 0}));
  const std::vector<double> tie{0.25, 0.5, 0.25};
  EXPECT_EQ(top_p_filter(tie, 0.6), (std::vector<double>{1.0 / 3, 2.0 / 3, 0}));
}

TEST(TopP, MatchesBruteForceMinimalPrefix) {
  Rng rng(10);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<double> p(n);
    double z = 0;
    for (auto& x : p) z += x = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    if (z == 0) continue;
    for (auto& x : p) x /= z;
    const double thr = rng.uniform();
    // brute force: the smallest k such that the k largest (ties by index) reach thr
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return p[a] != p[b] ? p[a] > p[b] : a < b; });
    std::size_t k = 1;
    double acc = p[idx[0]];
    while (acc < thr && k < n && p[idx[k]] > 0) acc += p[idx[k++]];
    const auto got = top_p_filter(p, thr);
    double sum = 0;
    std::size_t support = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += got[i];
      support += got[i] > 0;
    }
    EXPECT_EQ(support, k);
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t r = 0; r < k; ++r) EXPECT_GT(got[idx[r]], 0.0);
  }
}

TEST(TopP, FullMassReturnsInput) {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  const auto got = top_p_filter(p, 1.0);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(got[i], p[i], 1e-12);
}

// ---- sampling --------------------------------------------------------------------

TEST(Sampling, RandomModelSamplesAreValid) {
  ShapeFormer m(tiny(11));
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const auto partial = random_seq(rng, 4, 8, rng.below(8));
    auto r = sample_completion(m, partial, {0.9, 0, 13, static_cast<std::uint64_t>(i)});
    EXPECT_NO_THROW(r.sequence.validate());
    EXPECT_LE(partial.size() + r.sequence.size() + 1, 48u);
    if (!r.ended) EXPECT_EQ(partial.size() + 1 + r.sequence.size(), 48u);
  }
  auto capped = sample_completion(m, SparseSeq{4, 8, {}}, {1.0, 2, 1, 0});
  EXPECT_LE(capped.sequence.size(), 2u);
}

TEST(Sampling, DeterministicPerSeedAndIndex) {
  ShapeFormer m(tiny(14));
  const SparseSeq partial{4, 8, {{3, 1}, {20, 2}}};
  auto a = sample_completion(m, partial, {0.9, 0, 5, 2});
  auto b = sample_completion(m, partial, {0.9, 0, 5, 2});
  EXPECT_EQ(a.sequence, b.sequence);
}

TEST(Sampling, ForcedReplayMatchesNll) {
  ad::PrecisionScope f64(ad::DType::f64);
  ShapeFormer m(tiny(15));
  Rng rng(16);
  for (int trial = 0; trial < 3; ++trial) {
    const auto p = random_seq(rng, 4, 8, 4), c = random_seq(rng, 4, 8, 6);
    const auto s = plain_stream(p, c);
    const double nll_sum = m.nll(s).item() * static_cast<double>(s.loss_positions());
    EXPECT_NEAR(score_completion(m, p, c), nll_sum, 1e-5);
  }
}

TEST(Sampling, OverfitPairIsReproducedGreedily) {
  auto cfg = tiny(17);
  ShapeFormer m(cfg);
  Rng rng(18);
  std::vector<TrainPair> data{{random_seq(rng, 4, 8, 4), random_seq(rng, 4, 8, 6)}};
  SfTrainOptions opt;
  opt.batch_size = 1;
  opt.lr = 3e-3;
  opt.mask_prob = 0.0;
  ShapeFormerTrainer trainer(m, opt);
  double loss = 1e9;
  for (int i = 0; i < 400 && loss > 0.01; ++i) loss = trainer.step(data);
  ASSERT_LT(loss, 0.01);
  auto r = sample_completion(m, data[0].partial, {0.0, 0, 0, 0});
  EXPECT_TRUE(r.ended);
  EXPECT_EQ(r.sequence, data[0].complete);
}

// ---- persistence -----------------------------------------------------------------

TEST(ShapeFormerCheckpoint, ResumeIsBitIdentical) {
  Rng rng(19);
  std::vector<TrainPair> data;
  for (int i = 0; i < 3; ++i) data.push_back({random_seq(rng, 4, 8, 5), random_seq(rng, 4, 8, 5)});
  SfTrainOptions opt;
  opt.batch_size = 2;
  opt.seed = 4;
  ShapeFormer a(tiny());
  ShapeFormerTrainer ta(a, opt);
  ta.step(data);
  const auto saved = encode_checkpoint(ta.snapshot());
  const double next = ta.step(data);
  ShapeFormer b(tiny(77));
  ShapeFormerTrainer tb(b, opt);
  tb.load(decode_checkpoint(saved));
  EXPECT_EQ(tb.step(data), next);
  EXPECT_EQ(encode_checkpoint(tb.snapshot()), encode_checkpoint(ta.snapshot()));
}

TEST(ShapeFormerCheckpoint, VocabularyMismatchNamesBothValues) {
  ShapeFormer a(tiny());
  auto cfg = tiny();
  cfg.V = 16;
  ShapeFormer b(cfg);
  try {
    b.load(a.snapshot());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("V=8"), std::string::npos) << what;
    EXPECT_NE(what.find("V=16"), std::string::npos) << what;
  }
}
