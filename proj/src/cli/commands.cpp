#include "vqsf/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "vqsf/ad/grad_check.hpp"
#include "vqsf/common/checkpoint.hpp"
#include "vqsf/common/error.hpp"
#include "vqsf/common/rng.hpp"
#include "vqsf/geo/mesh.hpp"
#include "vqsf/metrics/metrics.hpp"

namespace vqsf::cli {
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

fs::path or_default(const fs::path& p, const fs::path& fallback) { return p.empty() ? fallback : p; }

// Loss log that survives resumption: rows past `keep_through` are dropped so
// the file always agrees with the checkpoint it is resumed from.
class CsvLog {
 public:
  CsvLog(const fs::path& path, const std::string& header, bool resume, std::uint64_t keep_through) : path_(path) {
    std::vector<std::string> kept;
    if (resume && fs::exists(path)) {
      std::ifstream in(path);
      std::string line;
      std::getline(in, line);
      if (line != header) throw DataError(path.string() + ": unexpected header '" + line + "'");
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (std::stoull(line.substr(0, line.find(','))) <= keep_through) kept.push_back(line);
      }
    }
    out_.open(path, std::ios::trunc);
    if (!out_) throw DataError("cannot write " + path.string());
    out_ << header << "\n";
    for (const auto& l : kept) out_ << l << "\n";
    out_.flush();
  }
  void row(const std::string& line) { out_ << line << "\n"; }
  void flush() {
    out_.flush();
    if (!out_) throw DataError("write failed for " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

vqdif::VqdifModel load_vqdif(const RunConfig& config, const fs::path& path) {
  if (!fs::exists(path)) throw DataError("vqdif checkpoint not found: " + path.string());
  vqdif::VqdifModel model(config.vqdif());
  model.load(read_checkpoint(path));
  if (!model.codebook().initialized()) throw DataError("vqdif checkpoint " + path.string() + " has an untrained codebook");
  return model;
}

sf::ShapeFormer load_shapeformer(const RunConfig& config, const fs::path& path) {
  if (!fs::exists(path)) throw DataError("shapeformer checkpoint not found: " + path.string());
  sf::ShapeFormer model(config.transformer());
  model.load(read_checkpoint(path));
  return model;
}

std::string two(std::size_t i, const char* prefix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%02zu", prefix, i);
  return buf;
}

void write_samples(const RunConfig& config, const vqdif::VqdifModel& vq, const sf::ShapeFormer& former,
                   const geo::PointCloud& scan, const fs::path& dir, const std::string& label,
                   std::vector<CompletionTiming>& timings, std::ostream& log) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  const auto partial = vq.encode(scan).first;
  const std::size_t k = config.size("sample.num_samples");
  const std::size_t res = config.size("sample.resolution");
  auto opts = config.sampling();
  for (std::size_t i = 0; i < k; ++i) {
    const auto t0 = Clock::now();
    opts.index = i;
    const auto result = sf::sample_completion(former, partial, opts);
    const auto stem = dir / two(i, "sample_");
    vqdif::write_sparse_seq(fs::path(stem).concat(".vqsq"), result.sequence);
    const auto mesh = vq.reconstruct(result.sequence, res);
    const auto obj = fs::path(stem).concat(".obj");
    geo::write_obj(obj, mesh);
    CompletionTiming t{obj, seconds_since(t0), result.sequence.size(), result.ended};
    log << label << "sample " << i << ": " << t.tuples << " tuples" << (t.ended ? "" : " (truncated, no END)") << ", "
        << mesh.triangles.size() << " triangles, " << std::fixed << std::setprecision(2) << t.seconds << " s\n"
        << std::defaultfloat;
    timings.push_back(t);
  }
}

struct Loaded {
  geo::PointCloud cloud;
  bool valid = true;
};

Loaded load_completion(const fs::path& file, std::size_t points, std::uint64_t seed) {
  if (file.extension() == ".xyz") return {geo::read_xyz(file), true};
  const auto mesh = geo::read_obj(file);
  if (mesh.empty()) return {{}, false};
  return {geo::sample_mesh_surface(mesh, points, seed), true};
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t parse_index(const std::string& name, const std::string& prefix, const fs::path& where) {
  if (name.rfind(prefix, 0) != 0) throw DataError("unexpected entry " + where.string());
  try {
    return std::stoul(name.substr(prefix.size()));
  } catch (const std::exception&) {
    throw DataError("unexpected entry " + where.string());
  }
}

}  // namespace

fs::path default_vqdif_checkpoint(const RunConfig& c) { return c.run_dir() / "checkpoints" / "vqdif.ckpt"; }
fs::path default_shapeformer_checkpoint(const RunConfig& c) { return c.run_dir() / "checkpoints" / "shapeformer.ckpt"; }

Manifest cmd_gen_data(const RunConfig& config, std::ostream& log) {
  const auto t0 = Clock::now();
  auto m = generate_dataset(config, [&](const std::string& s) { log << s << "\n" << std::flush; });
  log << "dataset written to " << config.data_dir().string() << " (" << m.counts[0] << "/" << m.counts[1] << "/"
      << m.counts[2] << " shapes, " << m.views.size() << " scans, " << std::fixed << std::setprecision(1)
      << seconds_since(t0) << " s)\n"
      << std::defaultfloat;
  return m;
}

vqdif::StepLosses cmd_train_vqdif(const RunConfig& config, const TrainRequest& req, std::ostream& log) {
  const auto ckpt = or_default(req.checkpoint, default_vqdif_checkpoint(config));
  const auto manifest = read_manifest(config.data_dir());
  const auto data = load_vqdif_samples(config.data_dir(), manifest, Split::train);

  vqdif::VqdifModel model(config.vqdif());
  vqdif::VqdifTrainer trainer(model, config.vqdif_train());
  if (req.resume) {
    if (!fs::exists(ckpt)) throw DataError("--resume given but no checkpoint at " + ckpt.string());
    trainer.load(read_checkpoint(ckpt));
    log << "resumed from " << ckpt.string() << " at step " << trainer.steps() << "\n";
  }
  CsvLog csv(config.run_dir() / "logs" / "vqdif_loss.csv", "step,bce,commit,total", req.resume, trainer.steps());

  const auto steps = static_cast<std::uint64_t>(config.integer("vqdif.steps"));
  const auto every = static_cast<std::uint64_t>(config.integer("vqdif.checkpoint_every"));
  vqdif::StepLosses last;
  const auto t0 = Clock::now();
  const auto first = trainer.steps();
  while (trainer.steps() < steps) {
    try {
      last = trainer.step(data);
    } catch (const DivergenceError&) {
      csv.flush();
      throw;
    }
    const auto done = trainer.steps();
    csv.row(std::to_string(done) + "," + num(last.bce) + "," + num(last.commit) + "," + num(last.total));
    if (done % every == 0 || done == steps) {
      csv.flush();
      write_checkpoint(ckpt, trainer.snapshot());
    }
    if (done % 100 == 0 || done == steps)
      log << "step " << done << "/" << steps << " bce " << num(last.bce) << " commit " << num(last.commit) << " ("
          << std::fixed << std::setprecision(1) << 1e3 * seconds_since(t0) / static_cast<double>(done - first)
          << " ms/step)\n"
          << std::defaultfloat << std::flush;
  }
  if (first == steps) write_checkpoint(ckpt, trainer.snapshot());
  log << "vqdif checkpoint: " << ckpt.string() << " (" << std::fixed << std::setprecision(1) << seconds_since(t0)
      << " s)\n"
      << std::defaultfloat;
  return last;
}

double cmd_train_shapeformer(const RunConfig& config, const TrainRequest& req, std::ostream& log) {
  const auto ckpt = or_default(req.checkpoint, default_shapeformer_checkpoint(config));
  const auto vq_path = or_default(req.vqdif_checkpoint, default_vqdif_checkpoint(config));
  const auto vq = load_vqdif(config, vq_path);
  const auto dir = config.data_dir();
  const auto manifest = read_manifest(dir);
  const std::size_t max_len = config.size("sf.max_seq_len");

  std::vector<sf::TrainPair> pairs;
  std::size_t dropped = 0;
  std::vector<std::uint64_t> histogram(config.vqdif().V, 0);
  for (const auto* rec : manifest.split(Split::train)) {
    const auto complete = vq.encode(geo::read_xyz(surface_path(dir, *rec))).first;
    for (const auto& e : complete.entries) ++histogram[e.v];
    for (const auto* view : manifest.views_of(rec->id)) {
      auto partial = vq.encode(geo::read_xyz(scan_path(dir, *rec, view->index))).first;
      if (partial.size() + complete.size() + 2 > max_len) {
        ++dropped;
        continue;
      }
      pairs.push_back({std::move(partial), complete});
    }
  }
  if (pairs.empty()) throw DataError("no training pair fits sf.max_seq_len = " + std::to_string(max_len));
  const auto stats = metrics::codebook_stats(histogram);
  log << pairs.size() << " training pairs (" << dropped << " longer than sf.max_seq_len dropped); codebook usage "
      << num(stats.usage) << ", perplexity " << num(stats.perplexity) << "\n";

  sf::ShapeFormer model(config.transformer());
  sf::ShapeFormerTrainer trainer(model, config.sf_train());
  if (req.resume) {
    if (!fs::exists(ckpt)) throw DataError("--resume given but no checkpoint at " + ckpt.string());
    trainer.load(read_checkpoint(ckpt));
    log << "resumed from " << ckpt.string() << " at step " << trainer.steps() << "\n";
  }
  CsvLog csv(config.run_dir() / "logs" / "shapeformer_loss.csv", "step,nll", req.resume, trainer.steps());

  const auto steps = static_cast<std::uint64_t>(config.integer("sf.steps"));
  const auto every = static_cast<std::uint64_t>(config.integer("sf.checkpoint_every"));
  double last = 0.0;
  const auto t0 = Clock::now();
  const auto first = trainer.steps();
  while (trainer.steps() < steps) {
    try {
      last = trainer.step(pairs);
    } catch (const DivergenceError&) {
      csv.flush();
      throw;
    }
    const auto done = trainer.steps();
    csv.row(std::to_string(done) + "," + num(last));
    if (done % every == 0 || done == steps) {
      csv.flush();
      write_checkpoint(ckpt, trainer.snapshot());
    }
    if (done % 100 == 0 || done == steps)
      log << "step " << done << "/" << steps << " nll " << num(last) << " (" << std::fixed << std::setprecision(1)
          << 1e3 * seconds_since(t0) / static_cast<double>(done - first) << " ms/step)\n"
          << std::defaultfloat << std::flush;
  }
  if (first == steps) write_checkpoint(ckpt, trainer.snapshot());
  log << "shapeformer checkpoint: " << ckpt.string() << "\n";
  return last;
}

vqdif::SparseSeq cmd_encode(const RunConfig& config, const fs::path& vq_path, const fs::path& cloud,
                            const fs::path& output, std::ostream& log) {
  const auto vq = load_vqdif(config, or_default(vq_path, default_vqdif_checkpoint(config)));
  const auto seq = vq.encode(geo::read_xyz(cloud)).first;
  vqdif::write_sparse_seq(output, seq);
  log << cloud.string() << ": " << seq.size() << " tuples -> " << output.string() << "\n";
  return seq;
}

std::vector<CompletionTiming> cmd_complete(const RunConfig& config, const CompleteRequest& req, std::ostream& log) {
  if (req.scan.empty() == req.split.empty()) throw UsageError("complete needs exactly one of --scan or --split");
  const auto vq = load_vqdif(config, or_default(req.vqdif_checkpoint, default_vqdif_checkpoint(config)));
  const auto former =
      load_shapeformer(config, or_default(req.shapeformer_checkpoint, default_shapeformer_checkpoint(config)));
  std::vector<CompletionTiming> timings;
  if (!req.scan.empty()) {
    const auto out = or_default(req.output, config.run_dir() / "samples" / req.scan.stem());
    write_samples(config, vq, former, geo::read_xyz(req.scan), out, "", timings, log);
  } else {
    const auto split = parse_split(req.split);
    const auto dir = config.data_dir();
    const auto manifest = read_manifest(dir);
    const auto out = or_default(req.output, config.run_dir() / "samples");
    for (const auto* rec : manifest.split(split))
      for (const auto* view : select_views(manifest, rec->id, config.size("eval.views_per_group")))
        write_samples(config, vq, former, geo::read_xyz(scan_path(dir, *rec, view->index)),
                      out / rec->id / two(view->index, "view_"),
                      rec->id + " view " + std::to_string(view->index) + (view->high ? " (high) " : " (low) "), timings,
                      log);
  }
  double total = 0;
  for (const auto& t : timings) total += t.seconds;
  if (!timings.empty())
    log << timings.size() << " samples, mean " << std::fixed << std::setprecision(2)
        << total / static_cast<double>(timings.size()) << " s/sample\n"
        << std::defaultfloat;
  return timings;
}

geo::Mesh cmd_reconstruct(const RunConfig& config, const fs::path& vq_path, const fs::path& sequence,
                          const fs::path& output, std::ostream& log) {
  const auto vq = load_vqdif(config, or_default(vq_path, default_vqdif_checkpoint(config)));
  const auto seq = vqdif::read_sparse_seq(sequence);
  const auto mesh = vq.reconstruct(seq, config.size("sample.resolution"));
  geo::write_obj(output, mesh);
  log << sequence.string() << ": " << seq.size() << " tuples -> " << mesh.triangles.size() << " triangles in "
      << output.string() << "\n";
  return mesh;
}

EvalReport cmd_eval(const RunConfig& config, const fs::path& dataset, const fs::path& completions, std::ostream& log) {
  const auto data_dir = or_default(dataset, config.data_dir());
  const auto comp_dir = or_default(completions, config.run_dir() / "samples");
  const auto manifest = read_manifest(data_dir);
  const std::size_t points = config.size("eval.points");
  const auto tests = manifest.split(Split::test);
  if (tests.empty()) throw DataError("dataset has no test shapes");

  EvalReport report;
  struct Acc {
    std::vector<geo::PointCloud> generated, reference;
    std::vector<double> tmd;
  };
  std::map<std::string, Acc> acc;  // "high", "low", "all"

  for (std::size_t si = 0; si < tests.size(); ++si) {
    const auto& rec = *tests[si];
    const auto sdir = comp_dir / rec.id;
    if (!fs::is_directory(sdir)) throw DataError("missing completions for " + rec.id + " (expected " + sdir.string() + ")");
    const auto gt = geo::read_xyz(surface_path(data_dir, rec));
    const auto farthest = metrics::farthest_distances(gt);
    const auto views = sorted_entries(sdir, true);
    if (views.empty()) throw DataError("no view directories under " + sdir.string());
    std::map<std::size_t, const ViewRecord*> by_index;
    for (const auto* v : manifest.views_of(rec.id)) by_index[v->index] = v;
    std::vector<std::string> groups_seen;
    for (const auto& vdir : views) {
      const std::size_t vi = parse_index(vdir.filename().string(), "view_", vdir);
      const auto scan_file = scan_path(data_dir, rec, vi);
      if (!fs::exists(scan_file)) throw DataError("missing scan " + scan_file.string());
      const auto partial = geo::read_xyz(scan_file);
      const auto it = by_index.find(vi);
      const bool high = it != by_index.end() && it->second->high;
      const double amb = it != by_index.end() ? it->second->ambiguity : metrics::ambiguity(gt, farthest, partial);
      std::vector<geo::PointCloud> clouds;
      const auto files = sorted_entries(vdir, false);
      std::size_t samples = 0;
      for (const auto& f : files) {
        if (f.extension() != ".obj" && f.extension() != ".xyz") continue;
        ++samples;
        EvalRow row{rec.id, geo::to_string(rec.kind), vi, high, parse_index(f.stem().string(), "sample_", f), amb};
        const auto seed = splitmix64(config.seed() ^ (si << 40) ^ (vi << 20) ^ row.sample);
        auto loaded = load_completion(f, points, seed);
        row.valid = loaded.valid;
        if (loaded.valid) {
          row.cd = metrics::chamfer_l2(loaded.cloud, gt);
          row.f1 = metrics::fscore(loaded.cloud, gt);
          row.uhd = metrics::uhd(partial, loaded.cloud);
          clouds.push_back(std::move(loaded.cloud));
        } else {
          row.cd = row.f1 = row.uhd = std::nan("");
        }
        report.rows.push_back(row);
      }
      if (samples == 0) throw DataError("no completions under " + vdir.string());
      for (const char* g : {high ? "high" : "low", "all"}) {
        auto& a = acc[g];
        if (clouds.size() >= 2) a.tmd.push_back(metrics::tmd(clouds));
        for (const auto& c : clouds) a.generated.push_back(c);
        if (std::find(groups_seen.begin(), groups_seen.end(), g) == groups_seen.end()) {
          a.reference.push_back(gt);
          groups_seen.push_back(g);
        }
      }
    }
  }

  for (const char* g : {"high", "low", "all"}) {
    EvalGroup out;
    out.name = g;
    std::size_t ok = 0;
    for (const auto& r : report.rows) {
      if (std::string(g) != "all" && (r.high ? "high" : "low") != std::string(g)) continue;
      ++out.rows;
      out.ambiguity += r.ambiguity;
      if (!r.valid) {
        ++out.failed;
        continue;
      }
      ++ok;
      out.cd += r.cd;
      out.f1 += r.f1;
      out.uhd += r.uhd;
    }
    if (out.rows == 0) continue;
    out.ambiguity /= static_cast<double>(out.rows);
    const double nan = std::nan("");
    out.cd = ok ? out.cd / static_cast<double>(ok) : nan;
    out.f1 = ok ? out.f1 / static_cast<double>(ok) : nan;
    out.uhd = ok ? out.uhd / static_cast<double>(ok) : nan;
    const auto& a = acc[g];
    out.tmd = a.tmd.empty() ? nan : [&] {
      double s = 0;
      for (double t : a.tmd) s += t;
      return s / static_cast<double>(a.tmd.size());
    }();
    out.mmd = a.generated.empty() || a.reference.empty() ? nan : metrics::mmd(a.generated, a.reference);
    report.groups.push_back(out);
  }

  const auto eval_dir = config.run_dir() / "eval";
  fs::create_directories(eval_dir);
  {
    std::ofstream csv(eval_dir / "metrics.csv", std::ios::trunc);
    csv << "shape,kind,view,group,sample,ambiguity,cd,f1,uhd\n";
    for (const auto& r : report.rows)
      csv << r.shape << "," << r.kind << "," << r.view << "," << (r.high ? "high" : "low") << "," << r.sample << ","
          << num(r.ambiguity) << "," << num(r.cd) << "," << num(r.f1) << "," << num(r.uhd) << "\n";
    if (!csv) throw DataError("cannot write " + (eval_dir / "metrics.csv").string());
  }
  {
    std::ofstream csv(eval_dir / "summary.csv", std::ios::trunc);
    csv << "group,rows,failed,ambiguity,cd,f1,uhd,tmd,mmd\n";
    for (const auto& g : report.groups)
      csv << g.name << "," << g.rows << "," << g.failed << "," << num(g.ambiguity) << "," << num(g.cd) << ","
          << num(g.f1) << "," << num(g.uhd) << "," << num(g.tmd) << "," << num(g.mmd) << "\n";
    if (!csv) throw DataError("cannot write " + (eval_dir / "summary.csv").string());
  }
  log << "group   rows failed  ambiguity         cd         f1        uhd        tmd        mmd\n";
  for (const auto& g : report.groups) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-6s %5zu %6zu %10.4f %10.5f %10.4f %10.4f %10.5f %10.5f\n", g.name.c_str(), g.rows,
                  g.failed, g.ambiguity, g.cd, g.f1, g.uhd, g.tmd, g.mmd);
    log << buf;
  }
  log << "wrote " << (eval_dir / "metrics.csv").string() << " (" << report.rows.size() << " rows)\n";
  return report;
}

bool cmd_grad_check(std::size_t cases, std::uint64_t seed, std::ostream& log) {
  ad::GradCheckOptions opts;
  opts.cases = cases;
  opts.seed = seed;
  const auto t0 = Clock::now();
  const auto report = ad::grad_check_all(opts);
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // op -> (cases, failures)
  for (const auto& c : report.cases) {
    auto& [n, bad] = counts[c.op];
    ++n;
    bad += c.passed ? 0 : 1;
  }
  log << "op                     cases   max rel error  status\n";
  for (const auto& [op, err] : report.per_op()) {
    const auto [n, bad] = counts[op];
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-22s %5zu %15.3e  %s\n", op.c_str(), n, err, bad ? "FAIL" : "ok");
    log << buf;
  }
  log << (report.passed() ? "all ops passed" : "gradient check FAILED") << " (" << report.cases.size() << " cases, "
      << std::fixed << std::setprecision(1) << seconds_since(t0) << " s)\n"
      << std::defaultfloat;
  return report.passed();
}

}  // namespace vqsf::cli
