// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any selected criterion fails.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "vqsf/ad/grad_check.hpp"
#include "vqsf/cli/commands.hpp"
#include "vqsf/common/checkpoint.hpp"
#include "vqsf/common/rng.hpp"
#include "vqsf/geo/mesh.hpp"
#include "vqsf/geo/sampling.hpp"
#include "vqsf/geo/shape.hpp"
#include "vqsf/metrics/metrics.hpp"
#include "vqsf/sf/model.hpp"
#include "vqsf/vqdif/model.hpp"
#include "vqsf/vqdif/trainer.hpp"

namespace fs = std::filesystem;
using namespace vqsf;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  bool verbose = false;
};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const Context& ctx, const std::string& msg) {
  if (ctx.verbose) std::fprintf(stderr, "  .. %s\n", msg.c_str());
}

std::vector<unsigned char> slurp(const fs::path& p) { return read_file_bytes(p); }

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Linear-interpolated percentile, q in [0, 1].
double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

void random_codebook(vqdif::VqdifModel& model, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> e(model.codebook().size() * model.codebook().dim());
  for (auto& x : e) x = rng.normal();
  model.codebook().set_embeddings(std::move(e));
}

// Marching-cubes grid for meshes that are scored.
constexpr std::size_t kEvalGrid = 128;

// ---- 1 --------------------------------------------------------------------------

Outcome gradient_suite(const Context&) {
  const auto t0 = Clock::now();
  ad::GradCheckOptions opt;
  opt.cases = 10;
  opt.tolerance = 1e-5;
  opt.seed = 2024;
  const auto report = ad::grad_check_all(opt);
  const double secs = since(t0);
  double worst = 0;
  std::string worst_op;
  for (const auto& [op, err] : report.per_op())
    if (err >= worst) worst = err, worst_op = op;
  std::size_t failed = 0;
  for (const auto& c : report.cases) failed += !c.passed;
  const auto ops = report.per_op().size();
  const bool ok = report.passed() && failed == 0 && report.cases.size() >= 10 * ops && secs < 120.0;
  return {ok, fmt("%zu ops x 10 cases, %zu failed, worst rel err %.2e (%s), %.1f s (limit 120 s)", ops, failed, worst,
                  worst_op.c_str(), secs)};
}

// ---- 2 --------------------------------------------------------------------------

geo::PointCloud random_cloud(Rng& rng, std::size_t i) {
  const std::size_t n = 1 + rng.below(i % 10 == 0 ? 20 : 3000);
  geo::PointCloud cloud;
  const int mode = static_cast<int>(i % 4);
  const geo::Vec3 c{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
  const double spread = rng.uniform(0.01, 0.3);
  for (std::size_t k = 0; k < n; ++k) {
    geo::Vec3 p;
    for (int a = 0; a < 3; ++a) {
      double v = 0;
      switch (mode) {
        case 0: v = rng.uniform(); break;
        case 1: v = c[a] + spread * rng.normal(); break;
        case 2: v = static_cast<double>(rng.below(33)) / 32.0; break;  // exactly on cell faces
        default: v = rng.bernoulli(0.5) ? rng.uniform(0.0, 0.05) : 1.0 - rng.uniform(0.0, 0.05); break;
      }
      p[a] = std::clamp(v, 0.0, geo::kUnitMax);
    }
    cloud.push_back(p);
  }
  return cloud;
}

Outcome sparsity_identity(const Context&) {
  const auto t0 = Clock::now();
  std::map<std::uint32_t, vqdif::VqdifModel> models;
  for (std::uint32_t r : {4u, 8u, 16u}) {
    vqdif::VqdifConfig c;
    c.R = r;
    c.V = 16;
    c.point_dim = 8;
    c.D = 8;
    c.seed = r;
    auto [it, _] = models.emplace(r, vqdif::VqdifModel(c));
    random_codebook(it->second, 100 + r);
  }
  Rng rng(7, Purpose::test, 2);
  std::size_t checked = 0, mismatches = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const auto cloud = random_cloud(rng, i);
    for (auto& [r, model] : models) {
      std::set<std::tuple<long, long, long>> cells;
      for (const auto& p : cloud)
        cells.emplace(static_cast<long>(std::floor(p.x * r)), static_cast<long>(std::floor(p.y * r)),
                      static_cast<long>(std::floor(p.z * r)));
      const auto seq = model.encode(cloud).first;
      mismatches += seq.size() != cells.size();
      ++checked;
    }
  }
  const double secs = since(t0);
  return {mismatches == 0 && secs < 60.0,
          fmt("%zu cloud/R combinations, %zu length mismatches, %.1f s (limit 60 s)", checked, mismatches, secs)};
}

// ---- 3 --------------------------------------------------------------------------

Outcome quantizer_oracle(const Context&) {
  const auto t0 = Clock::now();
  const std::size_t V = 256, D = 16;
  Rng rng(11, Purpose::test, 3);
  std::vector<double> e(V * D);
  for (auto& x : e) x = rng.normal();
  // entries 200.. duplicate 0.., so exact ties exist
  for (std::size_t j = 200; j < V; ++j)
    for (std::size_t k = 0; k < D; ++k) e[j * D + k] = e[(j - 200) * D + k];
  vqdif::Codebook book(V, D);
  book.set_embeddings(e);

  std::size_t mismatches = 0;
  const std::size_t n = 10000;
  ad::Tensor batch({n, D}, ad::DType::f64);
  std::vector<std::uint32_t> expect(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> z(D);
    if (i % 5 == 0) {
      const std::size_t j = 200 + rng.below(V - 200);  // sits exactly on a duplicated entry
      for (std::size_t k = 0; k < D; ++k) z[k] = e[j * D + k];
    } else {
      for (auto& x : z) x = 1.5 * rng.normal();
    }
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < V; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < D; ++k) d += (z[k] - e[j * D + k]) * (z[k] - e[j * D + k]);
      all.emplace_back(d, j);
    }
    expect[i] = static_cast<std::uint32_t>(std::min_element(all.begin(), all.end())->second);
    mismatches += book.quantize(z) != expect[i];
    for (std::size_t k = 0; k < D; ++k) batch.set(i * D + k, z[k]);
  }
  const auto rows = book.quantize_rows(batch);
  for (std::size_t i = 0; i < n; ++i) mismatches += rows[i] != expect[i];
  const double secs = since(t0);
  return {mismatches == 0 && secs < 30.0,
          fmt("10^4 queries (2000 exact ties), %zu mismatches, %.2f s (limit 30 s)", mismatches, secs)};
}

// ---- 4 --------------------------------------------------------------------------

Outcome quadratic_length(const Context&) {
  const auto sphere = geo::make_shape(geo::ShapeKind::sphere, {0.35}, 0);
  const auto surface = geo::sample_surface(sphere, 200000, 5);
  std::vector<double> lr, lk, ls;
  std::string counts;
  for (std::uint32_t r : {4u, 8u, 16u, 32u}) {
    vqdif::VqdifConfig c;
    c.R = r;
    c.base_resolution = std::max(32u, r);
    c.V = 16;
    c.point_dim = 8;
    c.D = 8;
    vqdif::VqdifModel model(c);
    random_codebook(model, r);
    const auto K = model.encode(surface).first.size();
    std::size_t solid = 0;
    for (std::uint32_t x = 0; x < r; ++x)
      for (std::uint32_t y = 0; y < r; ++y)
        for (std::uint32_t z = 0; z < r; ++z)
          solid += sphere.inside({(x + 0.5) / r, (y + 0.5) / r, (z + 0.5) / r});
    lr.push_back(std::log(r));
    lk.push_back(std::log(static_cast<double>(K)));
    ls.push_back(std::log(static_cast<double>(solid)));
    counts += fmt(" R=%u:%zu/%zu", r, K, solid);
  }
  const double s2 = slope(lr, lk), s3 = slope(lr, ls);
  return {std::abs(s2 - 2.0) <= 0.3 && std::abs(s3 - 3.0) <= 0.3,
          fmt("shell slope %.3f (2 +- 0.3), solid slope %.3f (3 +- 0.3); shell/solid counts", s2, s3) + counts};
}

// ---- 5 --------------------------------------------------------------------------

Outcome vqdif_round_trip(const Context& ctx) {
  cli::RunConfig config;
  const fs::path root = ctx.work / "c5";
  fs::remove_all(root);
  config.apply_overrides(std::vector<std::string>{"run_dir=" + root.string(), "seed=5", "data.kinds=sphere,box,torus", "data.val=0",
                          "data.test=30", "data.scans_per_shape=0", "data.test_views=6"});
  config.validate();
  cli::prepare_run_dir(config);
  std::ostringstream log;
  const auto manifest = cli::cmd_gen_data(config, log);
  progress(ctx, "c5 dataset ready, training " + config.get("vqdif.steps") + " steps");
  const auto t0 = Clock::now();
  cli::cmd_train_vqdif(config, {}, log);
  const double train_secs = since(t0);

  vqdif::VqdifModel model(config.vqdif());
  model.load(read_checkpoint(cli::default_vqdif_checkpoint(config)));
  std::map<std::string, std::vector<double>> cd, f1;
  std::vector<double> f_coarse;
  for (const auto* rec : manifest.split(cli::Split::test)) {
    const auto surface = geo::read_xyz(cli::surface_path(config.data_dir(), *rec));
    const auto seq = model.encode(surface).first;
    const auto mesh = model.reconstruct(seq, kEvalGrid);
    const auto kind = geo::to_string(rec->kind);
    const auto gt = geo::sample_surface(rec->shape(), 10000, rec->seed ^ 0xC5);
    if (mesh.empty()) {
      cd[kind].push_back(INFINITY);
      f1[kind].push_back(0.0);
      continue;
    }
    const auto pred = geo::sample_mesh_surface(mesh, 10000, rec->seed ^ 0x5C);
    cd[kind].push_back(metrics::chamfer_l2(pred, gt));
    f1[kind].push_back(metrics::fscore(pred, gt));
    const auto coarse = model.reconstruct(seq, 64);
    f_coarse.push_back(coarse.empty() ? 0.0 : metrics::fscore(geo::sample_mesh_surface(coarse, 10000, rec->seed ^ 0x5C), gt));
  }
  std::vector<double> all_cd, all_f;
  std::string per_kind;
  for (const auto& [k, v] : cd) {
    all_cd.insert(all_cd.end(), v.begin(), v.end());
    all_f.insert(all_f.end(), f1[k].begin(), f1[k].end());
    per_kind += fmt(" %s cd %.2e f %.3f;", k.c_str(), mean(v), mean(f1[k]));
  }
  const double mcd = mean(all_cd), mf = mean(all_f);
  const bool ok = mcd < 5e-3 && mf > 0.8 && train_secs < 1800.0;
  return {ok, fmt("%zu held-out shapes: chamfer-L2 %.2e (< 5e-3), F@1%% %.3f (> 0.8), training %.0f s (< 1800 s);",
                  all_cd.size(), mcd, mf, train_secs) +
                  per_kind + fmt(" F@1%% with a 64^3 grid %.3f", mean(f_coarse))};
}

// ---- 6 --------------------------------------------------------------------------

vqdif::SparseSeq voxel_sequence(const geo::PointCloud& cloud, std::uint32_t R, std::uint32_t V, std::uint64_t salt) {
  std::set<std::uint32_t> cells;
  for (const auto& p : cloud)
    cells.insert(static_cast<std::uint32_t>(p.x * R) * R * R + static_cast<std::uint32_t>(p.y * R) * R +
                 static_cast<std::uint32_t>(p.z * R));
  vqdif::SparseSeq s{R, V, {}};
  for (auto c : cells) s.entries.push_back({c, static_cast<std::uint32_t>(splitmix64(salt * 4096 + c) % V)});
  return s;
}

Outcome overfit_oracle(const Context& ctx) {
  sf::TransformerConfig tc;
  tc.seed = 6;
  const std::uint32_t R = tc.R, V = tc.V;
  std::vector<sf::TrainPair> pairs;
  const geo::ShapeKind kinds[] = {geo::ShapeKind::sphere, geo::ShapeKind::box, geo::ShapeKind::torus,
                                  geo::ShapeKind::capsule};
  for (std::uint64_t s = 0; pairs.size() < 10; ++s) {
    const auto shape = geo::make_shape(kinds[s % 4], {}, 600 + s);
    Rng rng(600 + s, Purpose::test, 6);
    geo::Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
    const auto scan = geo::virtual_scan(shape, geo::normalized(dir), 2048, s);
    auto surface = geo::sample_surface(shape, 4096, s);
    surface.insert(surface.end(), scan.begin(), scan.end());
    sf::TrainPair p{voxel_sequence(scan, R, V, s), voxel_sequence(surface, R, V, s)};
    if (p.partial.size() + p.complete.size() + 2 <= tc.max_seq_len) pairs.push_back(std::move(p));
  }
  sf::ShapeFormer model(tc);
  sf::SfTrainOptions to;
  to.batch_size = 10;
  to.lr = 1e-3;
  to.mask_prob = 0.0;
  to.seed = 6;
  sf::ShapeFormerTrainer trainer(model, to);
  auto full_nll = [&] {
    double total = 0;
    Rng unused(0);
    for (const auto& p : pairs)
      total += model.nll(sf::build_training_sequence(p.partial, p.complete, 0.0, unused, tc.max_seq_len)).value().item();
    return total / static_cast<double>(pairs.size());
  };
  const auto t0 = Clock::now();
  double nll = INFINITY;
  std::size_t steps = 0;
  while (steps < 4000) {
    for (int k = 0; k < 25; ++k, ++steps) trainer.step(pairs);
    nll = full_nll();
    progress(ctx, fmt("c6 step %zu nll %.4f", steps, nll));
    if (nll < 0.01) break;
  }
  std::size_t exact = 0;
  for (const auto& p : pairs) {
    sf::SampleOptions so;
    so.top_p = 0.0;
    const auto r = sf::sample_completion(model, p.partial, so);
    exact += r.ended && r.sequence == p.complete;
  }
  return {nll < 0.01 && exact == pairs.size(),
          fmt("nll %.4f after %zu steps (%.0f s), greedy reproduces %zu/10", nll, steps, since(t0), exact)};
}

// ---- 7 --------------------------------------------------------------------------

Outcome sampling_invariants(const Context&) {
  sf::TransformerConfig tc;
  tc.seed = 77;
  sf::ShapeFormer model(tc);
  const std::uint32_t cells = tc.R * tc.R * tc.R;
  Rng rng(7, Purpose::test, 7);
  std::size_t violations = 0, ended = 0, tuples = 0;
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < 1000; ++i) {
    vqdif::SparseSeq partial{tc.R, tc.V, {}};
    const std::size_t k = rng.below(40);
    std::set<std::uint32_t> cs;
    while (cs.size() < k) cs.insert(static_cast<std::uint32_t>(rng.below(cells)));
    for (auto c : cs) partial.entries.push_back({c, static_cast<std::uint32_t>(rng.below(tc.V))});
    sf::SampleOptions so;
    const double ps[] = {1.0, 0.9, 0.4, 0.05};
    so.top_p = ps[i % 4];
    so.max_len = i % 3 == 0 ? rng.below(8) + 1 : 0;
    so.seed = 70;
    so.index = i;
    const auto r = sf::sample_completion(model, partial, so);
    const auto& e = r.sequence.entries;
    bool ok = r.sequence.R == tc.R && r.sequence.V == tc.V;
    for (std::size_t j = 0; j < e.size(); ++j) {
      ok = ok && e[j].c < cells && e[j].v < tc.V;
      if (j > 0) ok = ok && e[j].c > e[j - 1].c;
    }
    // a sample either emitted END or hit one of the two length bounds
    const std::size_t room = tc.max_seq_len - partial.size() - 1;
    const bool bounded = (so.max_len && e.size() == so.max_len) || e.size() == room;
    ok = ok && (r.ended || bounded);
    ok = ok && (so.max_len == 0 || e.size() <= so.max_len) && e.size() <= room;
    violations += !ok;
    ended += r.ended;
    tuples += e.size();
  }
  return {violations == 0, fmt("1000 samples, %zu violations, %zu ended with END, mean length %.1f, %.1f s", violations,
                               ended, static_cast<double>(tuples) / 1000.0, since(t0))};
}

// ---- 8 --------------------------------------------------------------------------

Outcome multimodality(const Context& ctx) {
  const auto t0 = Clock::now();
  const std::size_t n_shapes = 64, views = 3, eval_points = 10000;
  const geo::Vec3 plus_x{1, 0, 0};
  std::vector<geo::ImplicitShape> shapes;
  std::vector<geo::PointCloud> surfaces, gt_eval;
  std::vector<vqdif::TrainSample> train;
  for (std::size_t i = 0; i < n_shapes; ++i) {
    shapes.push_back(geo::make_shape(geo::ShapeKind::ambiguous, {}, 8000 + i));
    surfaces.push_back(geo::sample_surface(shapes.back(), 8192, 8000 + i));
    gt_eval.push_back(geo::sample_surface(shapes.back(), eval_points, 9000 + i));
    train.push_back({surfaces.back(), geo::sample_occupancy_targets(shapes.back(), 16384, {}, 8000 + i)});
  }

  vqdif::VqdifConfig vc;
  vc.seed = 8;
  vqdif::VqdifModel vq(vc);
  vqdif::VqdifTrainOptions vo;
  vo.decay_steps = 1500;
  vo.seed = 8;
  vqdif::VqdifTrainer vt(vq, vo);
  for (std::size_t s = 0; s < vo.decay_steps; ++s) vt.step(train);
  progress(ctx, fmt("c8 vqdif trained (%.0f s)", since(t0)));

  // scans from +x and nearby directions; the knob on the -x side stays hidden
  std::vector<geo::PointCloud> scans;
  std::vector<sf::TrainPair> pairs;
  sf::TransformerConfig tc;
  tc.seed = 8;
  for (std::size_t i = 0; i < n_shapes; ++i) {
    const auto complete = vq.encode(surfaces[i]).first;
    Rng rng(8100 + i, Purpose::test, 8);
    for (std::size_t v = 0; v < views; ++v) {
      geo::Vec3 dir = plus_x;
      if (v > 0) dir = geo::Vec3{1.0, 0.25 * rng.normal(), 0.25 * rng.normal()};
      scans.push_back(geo::virtual_scan(shapes[i], geo::normalized(dir), 2048, 8200 + i * views + v));
      sf::TrainPair p{vq.encode(scans.back()).first, complete};
      if (p.partial.size() + p.complete.size() + 2 <= tc.max_seq_len) pairs.push_back(std::move(p));
    }
  }
  // UHD of each dataset scan to each ground-truth shape
  std::vector<double> paired, cross;
  for (std::size_t g = 0; g < n_shapes; ++g) {
    const metrics::NearestNeighbor nn(gt_eval[g]);
    for (std::size_t s = 0; s < scans.size(); ++s) {
      double worst = 0;
      for (const auto& p : scans[s]) worst = std::max(worst, nn.distance2(p));
      cross.push_back(std::sqrt(worst));
      if (s / views == g) paired.push_back(std::sqrt(worst));
    }
  }
  const double threshold = percentile(cross, 0.9);

  sf::ShapeFormer former(tc);
  sf::SfTrainOptions so;
  so.lr = 1e-3;
  so.seed = 8;
  sf::ShapeFormerTrainer st(former, so);
  double nll = 0;
  for (std::size_t s = 0; s < 600; ++s) nll = st.step(pairs);
  progress(ctx, fmt("c8 shapeformer trained, nll %.3f (%.0f s)", nll, since(t0)));

  const auto held_out = geo::make_shape(geo::ShapeKind::ambiguous, {}, 8999);
  const auto scan = geo::virtual_scan(held_out, plus_x, 2048, 8999);
  const auto partial = vq.encode(scan).first;
  std::vector<vqdif::SparseSeq> seqs;
  std::vector<geo::PointCloud> clouds;
  double worst_uhd = 0;
  bool all_decoded = true;
  for (std::size_t k = 0; k < 8; ++k) {
    sf::SampleOptions opt;
    opt.top_p = 0.9;
    opt.seed = 88;
    opt.index = k;
    seqs.push_back(sf::sample_completion(former, partial, opt).sequence);
    const auto mesh = vq.reconstruct(seqs.back(), kEvalGrid);
    if (mesh.empty()) {
      all_decoded = false;
      continue;
    }
    clouds.push_back(geo::sample_mesh_surface(mesh, eval_points, k));
    worst_uhd = std::max(worst_uhd, metrics::uhd(scan, clouds.back()));
  }
  std::set<std::vector<std::uint64_t>> distinct;
  for (const auto& s : seqs) {
    std::vector<std::uint64_t> key;
    for (const auto& t : s.entries) key.push_back((std::uint64_t{t.c} << 32) | t.v);
    distinct.insert(key);
  }
  const double tmd = clouds.size() >= 2 ? metrics::tmd(clouds) : 0.0;
  const bool ok = all_decoded && tmd > 0 && distinct.size() >= 2 && worst_uhd < threshold;
  return {ok, fmt("%zu/8 decoded, TMD %.2e, %zu distinct sequences, worst sample UHD %.4f vs 90th pct %.4f "
                  "(paired-only 90th pct %.4f), train nll %.3f, %.0f s",
                  clouds.size(), tmd, distinct.size(), worst_uhd, threshold, percentile(paired, 0.9), nll,
                  since(t0))};
}

// ---- 9 --------------------------------------------------------------------------

Outcome ambiguity_metric(const Context&) {
  std::vector<std::string> failures;
  const geo::Vec3 a{0.1, 0.2, 0.3}, b{0.7, 0.4, 0.5};
  const double two_point = metrics::ambiguity({a, b}, {a});
  if (two_point != 0.5) failures.push_back(fmt("two-point %.17g", two_point));

  const auto sphere = geo::make_shape(geo::ShapeKind::sphere, {0.3}, 0);
  const auto complete = geo::sample_surface(sphere, 4000, 9);
  const double self = metrics::ambiguity(complete, complete);
  if (self != 0.0) failures.push_back(fmt("P==B gives %.3g", self));

  const auto probe = geo::sample_surface(sphere, 4000, 10);
  geo::PointCloud cap, hemi;
  for (const auto& p : probe) {
    if (p.z > 0.5 + 0.25) cap.push_back(p);
    if (p.z > 0.5) hemi.push_back(p);
  }
  const double a_cap = metrics::ambiguity(complete, cap), a_hemi = metrics::ambiguity(complete, hemi);
  if (!(a_cap > a_hemi)) failures.push_back(fmt("cap %.4f <= hemisphere %.4f", a_cap, a_hemi));

  const auto box = geo::make_shape(geo::ShapeKind::box, {0.2, 0.15, 0.1, 0.5, 0.5, 0.5, 0.3, 0.2, 0.1}, 0);
  const auto ranking = metrics::rank_views(box, geo::fibonacci_viewpoints(70), 9);
  std::set<std::size_t> lo(ranking.low.begin(), ranking.low.end()), hi(ranking.high.begin(), ranking.high.end());
  double max_low = -1, min_high = 2;
  for (auto v : lo) max_low = std::max(max_low, ranking.scores[v]);
  for (auto v : hi) min_high = std::min(min_high, ranking.scores[v]);
  std::set<std::size_t> both(lo);
  both.insert(hi.begin(), hi.end());
  if (lo.size() != 35 || hi.size() != 35 || both.size() != 70 || max_low > min_high)
    failures.push_back(fmt("ranking %zu/%zu", lo.size(), hi.size()));

  std::string detail = fmt("two-point %.3f, P==B %.3f, cap %.4f > hemisphere %.4f, 70 views split %zu/%zu", two_point,
                           self, a_cap, a_hemi, lo.size(), hi.size());
  for (const auto& f : failures) detail += "; FAILED " + f;
  return {failures.empty(), detail};
}

// ---- 10 -------------------------------------------------------------------------

struct Brute {
  std::vector<double> ab, ba;  // unsquared nearest distances
};

Brute brute(const geo::PointCloud& a, const geo::PointCloud& b) {
  auto nearest = [](const geo::PointCloud& from, const geo::PointCloud& to) {
    std::vector<double> out;
    for (const auto& p : from) {
      double best = INFINITY;
      for (const auto& q : to) {
        const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      out.push_back(std::sqrt(best));
    }
    return out;
  };
  return {nearest(a, b), nearest(b, a)};
}

bool close(double x, double y) { return std::abs(x - y) <= 1e-12 * std::max({1.0, std::abs(x), std::abs(y)}); }

Outcome metric_oracles(const Context&) {
  Rng rng(10, Purpose::test, 10);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    auto cloud = [&](std::size_t n) {
      geo::PointCloud c;
      const double s = rng.uniform(0.05, 1.0);
      for (std::size_t k = 0; k < n; ++k) c.push_back({s * rng.uniform(), s * rng.uniform(), s * rng.uniform()});
      if (n > 4) c[n - 1] = c[0];  // duplicate point
      return c;
    };
    const auto pred = cloud(1 + rng.below(200)), gt = cloud(1 + rng.below(200));
    const auto d = brute(pred, gt);
    double cd = 0;
    for (double x : d.ab) cd += x * x / static_cast<double>(d.ab.size());
    double cd2 = 0;
    for (double x : d.ba) cd2 += x * x / static_cast<double>(d.ba.size());
    cd += cd2;
    const double uhd = *std::max_element(d.ab.begin(), d.ab.end());

    geo::Vec3 lo = gt[0], hi = gt[0];
    for (const auto& p : gt)
      for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], p[a]), hi[a] = std::max(hi[a], p[a]);
    const double tau = 0.01 * std::sqrt((hi.x - lo.x) * (hi.x - lo.x) + (hi.y - lo.y) * (hi.y - lo.y) +
                                        (hi.z - lo.z) * (hi.z - lo.z));
    bool ok = close(metrics::chamfer_l2(pred, gt), cd) && close(metrics::uhd(pred, gt), uhd);
    for (double t : {tau, 0.05, 0.2}) {
      double p = 0, r = 0;
      for (double x : d.ab) p += x <= t;
      for (double x : d.ba) r += x <= t;
      p /= static_cast<double>(d.ab.size());
      r /= static_cast<double>(d.ba.size());
      const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
      ok = ok && close(metrics::fscore(pred, gt, t), f);
      if (t == tau) ok = ok && close(metrics::fscore(pred, gt), f);
    }
    bad += !ok;
  }
  return {bad == 0, fmt("100 cloud pairs (<= 200 points), %zu disagree with the O(N^2) scan", bad)};
}

// ---- 11 -------------------------------------------------------------------------

cli::RunConfig small_pipeline(const fs::path& root) {
  cli::RunConfig c;
  c.apply_overrides(std::vector<std::string>{"run_dir=" + root.string(), "seed=11", "data.kinds=sphere,box,torus,ambiguous", "data.train=8",
                     "data.val=0", "data.test=2", "data.surface_points=2048", "data.targets=2048",
                     "data.scans_per_shape=2", "data.test_views=8", "data.scan_points=512", "vqdif.steps=30",
                     "vqdif.checkpoint_every=10", "vqdif.points_per_cloud=512", "vqdif.queries_per_shape=512",
                     "sf.steps=20", "sf.checkpoint_every=10", "sf.batch_size=4", "sample.num_samples=2",
                     "sample.top_p=0.9", "sample.max_len=40", "sample.resolution=32", "eval.views_per_group=1"});
  c.validate();
  cli::prepare_run_dir(c);
  return c;
}

Outcome reproducibility(const Context& ctx) {
  std::vector<fs::path> roots = {ctx.work / "c11_a", ctx.work / "c11_b"};
  for (const auto& r : roots) {
    fs::remove_all(r);
    const auto config = small_pipeline(r);
    std::ostringstream log;
    cli::cmd_gen_data(config, log);
    cli::cmd_train_vqdif(config, {}, log);
    cli::cmd_train_shapeformer(config, {}, log);
    cli::CompleteRequest req;
    req.split = "test";
    cli::cmd_complete(config, req, log);
    progress(ctx, "c11 run done: " + r.string());
  }
  std::size_t compared = 0, meshes = 0, differ = 0;
  for (const char* sub : {"checkpoints", "samples"}) {
    for (const auto& entry : fs::recursive_directory_iterator(roots[0] / sub)) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), roots[0]);
      const auto other = roots[1] / rel;
      ++compared;
      meshes += entry.path().extension() == ".obj";
      if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differ;
    }
  }
  const bool ok = differ == 0 && meshes > 0 && fs::exists(roots[0] / "checkpoints" / "vqdif.ckpt") &&
                  fs::exists(roots[0] / "checkpoints" / "shapeformer.ckpt");
  return {ok, fmt("%zu files compared (%zu meshes, 2 final checkpoints), %zu differ", compared, meshes, differ)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  fs::path work = fs::temp_directory_path() / "vqsf_acceptance";
  bool keep = false, verbose = false;
  app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 11));
  app.add_option("--work", work, "scratch directory");
  app.add_flag("--keep", keep, "keep the scratch directory");
  app.add_flag("-v,--verbose", verbose, "progress on stderr");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome(const Context&)>>> criteria = {
      {"gradient suite", gradient_suite},
      {"sparsity identity", sparsity_identity},
      {"quantizer oracle", quantizer_oracle},
      {"quadratic length", quadratic_length},
      {"vqdif round trip", vqdif_round_trip},
      {"shapeformer overfit", overfit_oracle},
      {"sampling invariants", sampling_invariants},
      {"multimodality", multimodality},
      {"ambiguity metric", ambiguity_metric},
      {"metric oracles", metric_oracles},
      {"reproducibility", reproducibility},
  };
  fs::create_directories(work);
  const Context ctx{work, verbose};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome out;
    const auto t0 = Clock::now();
    try {
      out = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    failed += !out.pass;
    std::printf("criterion %2d %s  %-20s %s [%.1f s]\n", id, out.pass ? "PASS" : "FAIL", criteria[i].first,
                out.detail.c_str(), since(t0));
    std::fflush(stdout);
  }
  if (!keep) fs::remove_all(work);
  return failed == 0 ? 0 : 1;
}
