#include "vqsf/cli/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

#include "vqsf/common/bytes.hpp"
#include "vqsf/common/checkpoint.hpp"
#include "vqsf/common/error.hpp"
#include "vqsf/common/rng.hpp"
#include "vqsf/geo/mesh.hpp"
#include "vqsf/metrics/metrics.hpp"

namespace vqsf::cli {
namespace fs = std::filesystem;

namespace {

constexpr std::uint16_t kTargetsVersion = 1;
constexpr int kManifestFormat = 1;

std::string fmt_double(double x) {
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, const std::string& where) {
  double x = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) throw DataError(where + ": bad number '" + s + "'");
  return x;
}

std::uint64_t parse_u64(const std::string& s, const std::string& where) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) throw DataError(where + ": bad integer '" + s + "'");
  return x;
}

std::vector<double> parse_list(const std::string& s, const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item, where));
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : ",") + fmt_double(x);
  return out;
}

// `word k=v k=v ...` into a map; DataError on a malformed pair.
std::map<std::string, std::string> fields(std::istringstream& line, const std::string& where) {
  std::map<std::string, std::string> out;
  std::string tok;
  while (line >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw DataError(where + ": expected key=value, got '" + tok + "'");
    out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

const std::string& need(const std::map<std::string, std::string>& m, const char* key, const std::string& where) {
  auto it = m.find(key);
  if (it == m.end()) throw DataError(where + ": missing '" + key + "'");
  return it->second;
}

geo::Vec3 random_direction(Rng& rng) {
  for (;;) {
    geo::Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = geo::norm(v);
    if (n > 1e-6) return v * (1.0 / n);
  }
}

std::string shape_id(Split s, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", to_string(s).c_str(), i);
  return buf;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw UsageError("unknown split '" + name + "' (train, val, test)");
}

std::uint64_t shape_seed(std::uint64_t master_seed, Split split, std::size_t index) {
  if (index >= 1000000) throw UsageError("at most 999999 shapes per split");
  return (master_seed << 32) + static_cast<std::uint64_t>(split) * 1000000 + index;
}

geo::ImplicitShape ShapeRecord::shape() const { return geo::make_shape(kind, params, seed); }

std::vector<const ShapeRecord*> Manifest::split(Split s) const {
  std::vector<const ShapeRecord*> out;
  for (const auto& r : shapes)
    if (r.split == s) out.push_back(&r);
  return out;
}

std::vector<const ViewRecord*> Manifest::views_of(const std::string& id) const {
  std::vector<const ViewRecord*> out;
  for (const auto& v : views)
    if (v.shape_id == id) out.push_back(&v);
  return out;
}

const ShapeRecord& Manifest::shape(const std::string& id) const {
  for (const auto& r : shapes)
    if (r.id == id) return r;
  throw DataError("manifest has no shape '" + id + "'");
}

std::string Manifest::text() const {
  std::ostringstream os;
  os << "# vqsf dataset manifest\n";
  os << "format = " << kManifestFormat << "\n";
  os << "seed = " << seed << "\n";
  os << "counts = " << counts[0] << " " << counts[1] << " " << counts[2] << "\n";
  for (const auto& r : shapes)
    os << "shape split=" << to_string(r.split) << " id=" << r.id << " kind=" << geo::to_string(r.kind)
       << " seed=" << r.seed << " params=" << join(r.params) << "\n";
  for (const auto& v : views)
    os << "view shape=" << v.shape_id << " index=" << v.index << " dir=" << join({v.direction.x, v.direction.y, v.direction.z})
       << " ambiguity=" << fmt_double(v.ambiguity) << " group=" << (v.high ? "high" : "low") << "\n";
  return os.str();
}

Manifest Manifest::parse(const std::string& text, const std::string& origin) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  bool have_format = false;
  while (std::getline(in, line)) {
    ++n;
    const std::string where = origin + ":" + std::to_string(n);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format" || word == "seed" || word == "counts") {
      std::string eq;
      ls >> eq;
      if (eq != "=") throw DataError(where + ": expected '='");
      if (word == "format") {
        int f = 0;
        ls >> f;
        if (f != kManifestFormat) throw DataError(where + ": unsupported manifest format " + std::to_string(f));
        have_format = true;
      } else if (word == "seed") {
        ls >> m.seed;
      } else {
        ls >> m.counts[0] >> m.counts[1] >> m.counts[2];
      }
      if (!ls) throw DataError(where + ": malformed '" + word + "' line");
    } else if (word == "shape") {
      auto f = fields(ls, where);
      ShapeRecord r;
      try {
        r.split = parse_split(need(f, "split", where));
        r.kind = geo::parse_shape_kind(need(f, "kind", where));
      } catch (const UsageError& e) {
        throw DataError(where + ": " + e.what());
      }
      r.id = need(f, "id", where);
      r.seed = parse_u64(need(f, "seed", where), where);
      r.params = parse_list(need(f, "params", where), where);
      m.shapes.push_back(std::move(r));
    } else if (word == "view") {
      auto f = fields(ls, where);
      ViewRecord v;
      v.shape_id = need(f, "shape", where);
      v.index = parse_u64(need(f, "index", where), where);
      const auto d = parse_list(need(f, "dir", where), where);
      if (d.size() != 3) throw DataError(where + ": dir needs 3 components");
      v.direction = {d[0], d[1], d[2]};
      v.ambiguity = parse_double(need(f, "ambiguity", where), where);
      const auto& g = need(f, "group", where);
      if (g != "high" && g != "low") throw DataError(where + ": group must be high or low");
      v.high = g == "high";
      m.views.push_back(std::move(v));
    } else {
      throw DataError(where + ": unknown record '" + word + "'");
    }
  }
  if (!have_format) throw DataError(origin + ": not a dataset manifest (no format line)");
  for (auto s : {Split::train, Split::val, Split::test})
    if (m.split(s).size() != m.counts[static_cast<int>(s)])
      throw DataError(origin + ": " + to_string(s) + " count does not match its shape records");
  return m;
}

Manifest read_manifest(const fs::path& data_dir) {
  const auto path = data_dir / "manifest.txt";
  if (!fs::exists(path)) throw DataError("no dataset manifest at " + path.string());
  const auto bytes = read_file_bytes(path);
  return Manifest::parse(std::string(bytes.begin(), bytes.end()), path.string());
}

fs::path shape_dir(const fs::path& data_dir, const ShapeRecord& rec) { return data_dir / to_string(rec.split) / rec.id; }
fs::path surface_path(const fs::path& d, const ShapeRecord& r) { return shape_dir(d, r) / "surface.xyz"; }
fs::path targets_path(const fs::path& d, const ShapeRecord& r) { return shape_dir(d, r) / "targets.bin"; }
fs::path scan_path(const fs::path& d, const ShapeRecord& r, std::size_t view) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scan_%02zu.xyz", view);
  return shape_dir(d, r) / buf;
}

void write_targets(const fs::path& path, const geo::OccupancyTargets& t) {
  if (t.points.size() != t.occupancy.size()) throw DataError("occupancy targets: point/label count mismatch");
  ByteWriter w;
  w.put_bytes("VQOT", 4);
  w.put(kTargetsVersion);
  w.put(static_cast<std::uint64_t>(t.points.size()));
  for (const auto& p : t.points) {
    w.put(static_cast<float>(p.x));
    w.put(static_cast<float>(p.y));
    w.put(static_cast<float>(p.z));
  }
  w.put_bytes(t.occupancy.data(), t.occupancy.size());
  write_file_bytes(path, w.bytes);
}

geo::OccupancyTargets read_targets(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string what = "occupancy targets " + path.string();
  ByteReader r(bytes, bytes.size(), what);
  char magic[4];
  r.take(magic, 4);
  if (std::string(magic, 4) != "VQOT") throw DataError(what + ": bad magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kTargetsVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
  const auto n = r.get<std::uint64_t>();
  if (n == 0 || n > r.remaining() / 13 || r.remaining() != 13 * n) throw DataError(what + ": size does not match count");
  geo::OccupancyTargets t;
  t.points.resize(n);
  for (auto& p : t.points) {
    p.x = r.get<float>();
    p.y = r.get<float>();
    p.z = r.get<float>();
    for (int a = 0; a < 3; ++a)
      if (!(p[a] >= 0.0 && p[a] < 1.0)) throw DataError(what + ": point outside [0,1)^3");
  }
  t.occupancy.resize(n);
  r.take(t.occupancy.data(), n);
  for (auto o : t.occupancy)
    if (o > 1) throw DataError(what + ": occupancy must be 0 or 1");
  return t;
}

Manifest generate_dataset(const RunConfig& config, const std::function<void(const std::string&)>& log) {
  const fs::path dir = config.data_dir();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create dataset directory " + dir.string());

  const auto kinds = config.shape_kinds();
  const auto scan_opts = config.scan_options();
  const auto target_opts = config.target_options();
  const std::size_t n_surface = config.size("data.surface_points");
  const std::size_t n_scan = config.size("data.scan_points");
  const auto fib = geo::fibonacci_viewpoints(config.size("data.test_views"));

  Manifest m;
  m.seed = config.seed();
  for (auto split : {Split::train, Split::val, Split::test}) {
    const std::size_t count = config.size("data." + to_string(split));
    m.counts[static_cast<int>(split)] = count;
    for (std::size_t i = 0; i < count; ++i) {
      ShapeRecord rec;
      rec.split = split;
      rec.id = shape_id(split, i);
      rec.kind = kinds[i % kinds.size()];
      rec.seed = shape_seed(m.seed, split, i);
      const auto shape = geo::make_shape(rec.kind, {}, rec.seed);
      rec.params = shape.params();
      fs::create_directories(shape_dir(dir, rec), ec);
      if (ec) throw DataError("cannot create " + shape_dir(dir, rec).string() + ": " + ec.message());

      const auto surface = geo::sample_surface(shape, n_surface, splitmix64(rec.seed ^ 0x51));
      geo::write_xyz(surface_path(dir, rec), surface);
      write_targets(targets_path(dir, rec),
                    geo::sample_occupancy_targets(shape, config.size("data.targets"), target_opts,
                                                  splitmix64(rec.seed ^ 0x52)));

      std::vector<geo::Vec3> dirs;
      if (split == Split::test) {
        dirs = fib;
      } else {
        Rng rng(rec.seed, Purpose::data, 3);
        for (std::size_t v = 0; v < config.size("data.scans_per_shape"); ++v) dirs.push_back(random_direction(rng));
      }
      if (!dirs.empty()) {
        const auto farthest = metrics::farthest_distances(surface);
        std::vector<double> scores;
        for (std::size_t v = 0; v < dirs.size(); ++v) {
          const auto scan = geo::virtual_scan(shape, dirs[v], n_scan, splitmix64(rec.seed ^ (0x1000 + v)), scan_opts);
          geo::write_xyz(scan_path(dir, rec, v), scan);
          scores.push_back(metrics::ambiguity(surface, farthest, scan));
        }
        std::vector<bool> high(dirs.size(), false);
        if (dirs.size() >= 2)
          for (auto v : metrics::rank_views(scores).high) high[v] = true;
        for (std::size_t v = 0; v < dirs.size(); ++v) m.views.push_back({rec.id, v, dirs[v], scores[v], high[v]});
      }
      m.shapes.push_back(std::move(rec));
      if (log && ((i + 1) % 20 == 0 || i + 1 == count))
        log(to_string(split) + ": " + std::to_string(i + 1) + "/" + std::to_string(count) + " shapes");
    }
  }
  const auto text = m.text();
  write_file_bytes(dir / "manifest.txt", std::vector<unsigned char>(text.begin(), text.end()));
  return m;
}

std::vector<vqdif::TrainSample> load_vqdif_samples(const fs::path& data_dir, const Manifest& manifest, Split split) {
  std::vector<vqdif::TrainSample> out;
  for (const auto* rec : manifest.split(split))
    out.push_back({geo::read_xyz(surface_path(data_dir, *rec)), read_targets(targets_path(data_dir, *rec))});
  if (out.empty()) throw DataError("dataset has no " + to_string(split) + " shapes");
  return out;
}

std::vector<const ViewRecord*> select_views(const Manifest& manifest, const std::string& shape_id, std::size_t k) {
  auto views = manifest.views_of(shape_id);
  if (views.empty()) throw DataError("manifest lists no views for shape '" + shape_id + "'");
  std::stable_sort(views.begin(), views.end(), [](const ViewRecord* a, const ViewRecord* b) {
    return a->ambiguity != b->ambiguity ? a->ambiguity > b->ambiguity : a->index < b->index;
  });
  std::vector<const ViewRecord*> out;
  const std::size_t n = views.size(), take = std::min(k, n / 2 == 0 ? n : n / 2);
  for (std::size_t i = 0; i < take; ++i) out.push_back(views[i]);                // most ambiguous
  for (std::size_t i = 0; i < take && n >= 2; ++i) out.push_back(views[n - 1 - i]);  // least ambiguous
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  std::stable_sort(out.begin(), out.end(), [](const ViewRecord* a, const ViewRecord* b) {
    return a->high != b->high ? a->high : a->index < b->index;
  });
  return out;
}

}  // namespace vqsf::cli
