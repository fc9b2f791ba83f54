#include "vqsf/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vqsf/common/error.hpp"

namespace vqsf::cli {
namespace {

enum class Kind { integer, real, text, kinds };

struct Field {
  const char* key;
  Kind kind;
  const char* fallback;
  double lo = 0, hi = 0;  // inclusive; unused for text
  const char* doc = "";
};

// Full-scale presets for reference: R=16, V=4096, beta=0.01, top_p=0.4,
// 20/4 blocks, 16 heads, embed_dim 1024, max_seq_len 812.
const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      {"schema_version", Kind::integer, "1", 1, 1, "config format version"},
      {"seed", Kind::integer, "0", 0, 2147483647, "master seed (data, init, training)"},
      {"run_dir", Kind::text, "run", 0, 0, "output root"},

      {"data.dir", Kind::text, "", 0, 0, "dataset directory; empty = <run_dir>/data"},
      {"data.kinds", Kind::kinds, "sphere,box,torus,cylinder,capsule,table,cup,ambiguous", 0, 0,
       "shape kinds, assigned round-robin"},
      {"data.train", Kind::integer, "200", 1, 999999},
      {"data.val", Kind::integer, "20", 0, 999999},
      {"data.test", Kind::integer, "20", 0, 999999},
      {"data.surface_points", Kind::integer, "8192", 16, 1e7, "ground-truth surface samples per shape"},
      {"data.targets", Kind::integer, "16384", 16, 1e7, "occupancy targets per shape"},
      {"data.scans_per_shape", Kind::integer, "4", 0, 1024, "random-view scans per train/val shape"},
      {"data.test_views", Kind::integer, "70", 6, 4096, "Fibonacci + axis views per test shape"},
      {"data.scan_points", Kind::integer, "2048", 1, 1e7},
      {"data.scan_resolution", Kind::integer, "128", 8, 2048},
      {"data.scan_noise", Kind::real, "0", 0, 0.05},
      {"data.sigma_near", Kind::real, "0.01", 0, 0.5},
      {"data.sigma_far", Kind::real, "0.05", 0, 0.5},
      {"data.uniform_fraction", Kind::real, "0.2", 0, 1},

      {"vqdif.base_resolution", Kind::integer, "32", 2, 128},
      {"vqdif.R", Kind::integer, "8", 2, 32},
      {"vqdif.point_dim", Kind::integer, "32", 1, 4096},
      {"vqdif.D", Kind::integer, "32", 1, 4096},
      {"vqdif.V", Kind::integer, "256", 1, 1 << 20},
      {"vqdif.unet_depth", Kind::integer, "2", 0, 5},
      {"vqdif.unet_channels", Kind::integer, "32", 1, 1024},
      {"vqdif.upsample_stages", Kind::integer, "1", 0, 4},
      {"vqdif.upsample_channels", Kind::integer, "16", 1, 1024},
      {"vqdif.mlp_hidden", Kind::integer, "64", 1, 4096},
      {"vqdif.mlp_layers", Kind::integer, "3", 0, 16},
      {"vqdif.gamma", Kind::real, "0.99", 0, 1, "codebook EMA decay"},
      {"vqdif.epsilon", Kind::real, "1e-5", 1e-12, 1},
      {"vqdif.dead_after", Kind::integer, "200", 0, 1e9},
      {"vqdif.beta", Kind::real, "0.01", 0, 100, "commitment weight"},
      {"vqdif.lr", Kind::real, "5e-4", 1e-9, 1},
      {"vqdif.lr_final", Kind::real, "5e-5", 0, 1, "cosine-annealed target over vqdif.steps"},
      {"vqdif.steps", Kind::integer, "5000", 1, 1e9},
      {"vqdif.batch_size", Kind::integer, "4", 1, 4096},
      {"vqdif.points_per_cloud", Kind::integer, "2048", 1, 1e7},
      {"vqdif.queries_per_shape", Kind::integer, "2048", 1, 1e7},
      {"vqdif.checkpoint_every", Kind::integer, "500", 1, 1e9},

      {"sf.blocks_coord", Kind::integer, "4", 1, 128},
      {"sf.blocks_value", Kind::integer, "2", 1, 128},
      {"sf.heads", Kind::integer, "4", 1, 128},
      {"sf.embed_dim", Kind::integer, "128", 1, 8192},
      {"sf.max_seq_len", Kind::integer, "160", 4, 65536},
      {"sf.dropout", Kind::real, "0", 0, 0.9},
      {"sf.lr", Kind::real, "3e-4", 1e-9, 1},
      {"sf.steps", Kind::integer, "3000", 1, 1e9},
      {"sf.batch_size", Kind::integer, "8", 1, 4096},
      {"sf.mask_prob", Kind::real, "0.3", 0, 1, "partial-tuple drop probability in training"},
      {"sf.checkpoint_every", Kind::integer, "500", 1, 1e9},

      {"sample.top_p", Kind::real, "0.4", 0, 1},
      {"sample.num_samples", Kind::integer, "3", 1, 100000},
      {"sample.max_len", Kind::integer, "0", 0, 65536, "max complete tuples; 0 = max_seq_len bound"},
      {"sample.seed", Kind::integer, "0", 0, 2147483647},
      {"sample.resolution", Kind::integer, "64", 4, 512, "marching-cubes grid"},

      {"eval.points", Kind::integer, "10000", 16, 1e7, "points resampled from each completion mesh"},
      {"eval.views_per_group", Kind::integer, "2", 1, 2048, "most/least ambiguous views completed per test shape"},
  };
  return fields;
}

const Field& field(const std::string& key) {
  for (const auto& f : schema())
    if (key == f.key) return f;
  throw UsageError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string range_text(const Field& f) {
  std::ostringstream os;
  os << "[" << f.lo << ", " << f.hi << "]";
  return os.str();
}

std::string canonical(const Field& f, const std::string& raw) {
  const std::string v = trim(raw);
  auto bad = [&](const std::string& why) { return UsageError("config key '" + std::string(f.key) + "': " + why); };
  switch (f.kind) {
    case Kind::integer: {
      std::int64_t x = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
        // accept exact integers written in floating form, e.g. 1e4
        double d = 0;
        auto [q, ec2] = std::from_chars(v.data(), v.data() + v.size(), d);
        if (ec2 != std::errc() || q != v.data() + v.size() || v.empty() || d != static_cast<double>(static_cast<std::int64_t>(d)))
          throw bad("expected an integer, got '" + v + "'");
        x = static_cast<std::int64_t>(d);
      }
      if (static_cast<double>(x) < f.lo || static_cast<double>(x) > f.hi)
        throw bad(std::to_string(x) + " outside " + range_text(f));
      return std::to_string(x);
    }
    case Kind::real: {
      double x = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (ec != std::errc() || p != v.data() + v.size() || v.empty() || !std::isfinite(x))
        throw bad("expected a number, got '" + v + "'");
      if (x < f.lo || x > f.hi) throw bad(v + " outside " + range_text(f));
      char buf[64];
      auto r = std::to_chars(buf, buf + sizeof buf, x);
      return std::string(buf, r.ptr);
    }
    case Kind::kinds: {
      std::vector<std::string> names;
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        try {
          geo::parse_shape_kind(item);
        } catch (const UsageError&) {
          throw bad("unknown shape kind '" + item + "'");
        }
        names.push_back(item);
      }
      if (names.empty()) throw bad("needs at least one shape kind");
      std::string out;
      for (const auto& n : names) out += (out.empty() ? "" : ",") + n;
      return out;
    }
    case Kind::text:
      return v;
  }
  return v;
}

bool power_of_two(std::int64_t x) { return x > 0 && (x & (x - 1)) == 0; }

}  // namespace

RunConfig::RunConfig() {
  for (const auto& f : schema()) values_[f.key] = canonical(f, f.fallback);
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  c.merge_text(ss.str(), path.string());
  return c;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::stringstream ss(text);
  std::string line;
  std::size_t n = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(ss, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = origin + ":" + std::to_string(n) + ": ";
    if (eq == std::string::npos) throw UsageError(where + "expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    if (auto it = seen.find(key); it != seen.end())
      throw UsageError(where + "duplicate key '" + key + "' (first on line " + std::to_string(it->second) + ")");
    seen[key] = n;
    try {
      set(key, t.substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError(where + e.what());
    }
  }
  if (!seen.count("schema_version"))
    throw UsageError(origin + ": missing 'schema_version = " + std::to_string(kConfigSchemaVersion) + "'");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  values_[key] = canonical(field(key), value);
}

void RunConfig::apply_overrides(std::span<const std::string> assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw UsageError("override '" + a + "' is not key=value");
    set(trim(a.substr(0, eq)), a.substr(eq + 1));
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  field(key);
  return values_.at(key);
}

std::int64_t RunConfig::integer(const std::string& key) const {
  if (field(key).kind != Kind::integer) throw UsageError("config key '" + key + "' is not an integer");
  return std::stoll(values_.at(key));
}

double RunConfig::real(const std::string& key) const {
  const auto& f = field(key);
  if (f.kind != Kind::real && f.kind != Kind::integer) throw UsageError("config key '" + key + "' is not numeric");
  return std::stod(values_.at(key));
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

void RunConfig::validate() const {
  if (!power_of_two(integer("vqdif.R")) || !power_of_two(integer("vqdif.base_resolution")))
    throw UsageError("vqdif.R and vqdif.base_resolution must be powers of two");
  if (integer("vqdif.base_resolution") < integer("vqdif.R"))
    throw UsageError("vqdif.base_resolution must be >= vqdif.R");
  if (real("data.sigma_near") >= real("data.sigma_far")) throw UsageError("data.sigma_near must be < data.sigma_far");
  if (real("vqdif.lr_final") > real("vqdif.lr")) throw UsageError("vqdif.lr_final must be <= vqdif.lr");
  vqdif().validate();
  transformer().validate();
}

std::string RunConfig::resolved() const {
  std::ostringstream os;
  os << "# vqsf " << kToolVersion << " resolved configuration\n";
  for (const auto& f : schema()) os << f.key << " = " << values_.at(f.key) << "\n";
  return os.str();
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : schema()) out.push_back(f.key);
    return out;
  }();
  return k;
}

std::filesystem::path RunConfig::data_dir() const {
  const auto& d = get("data.dir");
  return d.empty() ? run_dir() / "data" : std::filesystem::path(d);
}

std::vector<geo::ShapeKind> RunConfig::shape_kinds() const {
  std::vector<geo::ShapeKind> out;
  for (const auto& n : list("data.kinds")) out.push_back(geo::parse_shape_kind(n));
  return out;
}

geo::ScanOptions RunConfig::scan_options() const {
  geo::ScanOptions o;
  o.resolution = size("data.scan_resolution");
  o.depth_tolerance = 2.0 / static_cast<double>(o.resolution);
  o.noise_sigma = real("data.scan_noise");
  return o;
}

geo::TargetOptions RunConfig::target_options() const {
  return {real("data.sigma_near"), real("data.sigma_far"), real("data.uniform_fraction")};
}

vqdif::VqdifConfig RunConfig::vqdif() const {
  vqdif::VqdifConfig c;
  c.base_resolution = static_cast<std::uint32_t>(integer("vqdif.base_resolution"));
  c.R = static_cast<std::uint32_t>(integer("vqdif.R"));
  c.point_dim = size("vqdif.point_dim");
  c.D = size("vqdif.D");
  c.V = static_cast<std::uint32_t>(integer("vqdif.V"));
  c.unet_depth = size("vqdif.unet_depth");
  c.unet_channels = size("vqdif.unet_channels");
  c.upsample_stages = size("vqdif.upsample_stages");
  c.upsample_channels = size("vqdif.upsample_channels");
  c.mlp_hidden = size("vqdif.mlp_hidden");
  c.mlp_layers = size("vqdif.mlp_layers");
  c.codebook.decay = real("vqdif.gamma");
  c.codebook.epsilon = real("vqdif.epsilon");
  c.codebook.dead_after = static_cast<std::uint32_t>(integer("vqdif.dead_after"));
  c.seed = seed();
  return c;
}

vqdif::VqdifTrainOptions RunConfig::vqdif_train() const {
  vqdif::VqdifTrainOptions o;
  o.batch_size = size("vqdif.batch_size");
  o.points_per_cloud = size("vqdif.points_per_cloud");
  o.queries_per_shape = size("vqdif.queries_per_shape");
  o.lr = real("vqdif.lr");
  o.lr_final = real("vqdif.lr_final");
  o.decay_steps = o.lr_final < o.lr ? static_cast<std::uint64_t>(integer("vqdif.steps")) : 0;
  o.beta = real("vqdif.beta");
  o.seed = seed();
  return o;
}

sf::TransformerConfig RunConfig::transformer() const {
  sf::TransformerConfig c;
  c.R = static_cast<std::uint32_t>(integer("vqdif.R"));
  c.V = static_cast<std::uint32_t>(integer("vqdif.V"));
  c.n_blocks_coord = size("sf.blocks_coord");
  c.n_blocks_value = size("sf.blocks_value");
  c.n_heads = size("sf.heads");
  c.embed_dim = size("sf.embed_dim");
  c.max_seq_len = size("sf.max_seq_len");
  c.dropout = real("sf.dropout");
  c.seed = seed();
  return c;
}

sf::SfTrainOptions RunConfig::sf_train() const {
  sf::SfTrainOptions o;
  o.batch_size = size("sf.batch_size");
  o.lr = real("sf.lr");
  o.mask_prob = real("sf.mask_prob");
  o.seed = seed();
  return o;
}

sf::SampleOptions RunConfig::sampling() const {
  sf::SampleOptions o;
  o.top_p = real("sample.top_p");
  o.max_len = size("sample.max_len");
  o.seed = static_cast<std::uint64_t>(integer("sample.seed"));
  return o;
}

void prepare_run_dir(const RunConfig& config) {
  namespace fs = std::filesystem;
  const fs::path root = config.run_dir();
  std::error_code ec;
  for (const char* sub : {"checkpoints", "logs", "samples", "eval"}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw DataError("cannot create " + (root / sub).string() + ": " + ec.message());
  }
  auto write = [&](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
    if (!out) throw DataError("cannot write " + p.string());
  };
  write(root / "config.resolved", config.resolved());
  write(root / "VERSION", std::string("vqsf ") + kToolVersion + "\n");
}

}  // namespace vqsf::cli
