#include "vqsf/geo/shape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vqsf/common/error.hpp"
#include "vqsf/common/rng.hpp"

namespace vqsf::geo {
namespace {

double box_sdf(const Vec3& q, const Vec3& b) {
  Vec3 d{std::abs(q.x) - b.x, std::abs(q.y) - b.y, std::abs(q.z) - b.z};
  Vec3 pos{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
  return norm(pos) + std::min(std::max({d.x, d.y, d.z}), 0.0);
}

double cylinder_sdf(const Vec3& q, double r, double h) {
  const double dx = std::hypot(q.x, q.y) - r;
  const double dz = std::abs(q.z) - h;
  return std::min(std::max(dx, dz), 0.0) + std::hypot(std::max(dx, 0.0), std::max(dz, 0.0));
}

// Fixed geometry of the ambiguous composite.
constexpr double kBodyHalf = 0.16;
constexpr double kBodyShift = 0.05;
constexpr double kKnobRadius = 0.07;
constexpr double kKnobOffset = 0.07;

std::array<double, 9> rotation_xyz(const Vec3& e) {
  const double cx = std::cos(e.x), sx = std::sin(e.x);
  const double cy = std::cos(e.y), sy = std::sin(e.y);
  const double cz = std::cos(e.z), sz = std::sin(e.z);
  // Rz * Ry * Rx
  return {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx,
          sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx,
          -sy,     cy * sx,                cy * cx};
}

void require(bool ok, ShapeKind kind, const std::string& what) {
  if (!ok) throw UsageError(to_string(kind) + ": " + what);
}

void validate_size(ShapeKind kind, const std::vector<double>& s) {
  if (kind != ShapeKind::ambiguous)
    for (double v : s) require(std::isfinite(v) && v > 0.0, kind, "size parameters must be positive");
  switch (kind) {
    case ShapeKind::torus: require(s[1] < s[0], kind, "tube radius must be below the ring radius"); break;
    case ShapeKind::table:
      require(s[2] < s[4], kind, "top thickness must be below the height");
      require(s[3] < std::min(s[0], s[1]), kind, "legs must fit under the top");
      break;
    case ShapeKind::cup: require(s[2] < std::min(s[0], s[1]), kind, "wall must be thinner than radius and height"); break;
    case ShapeKind::ambiguous:
      require(s[0] == std::floor(s[0]) && s[0] >= 0 && s[0] <= 3, kind, "variant must be 0, 1, 2 or 3");
      break;
    default: break;
  }
}

std::vector<double> random_size(ShapeKind kind, Rng& rng) {
  auto u = [&](double lo, double hi) { return rng.uniform(lo, hi); };
  switch (kind) {
    case ShapeKind::sphere: return {u(0.15, 0.35)};
    case ShapeKind::box: return {u(0.1, 0.28), u(0.1, 0.28), u(0.1, 0.28)};
    case ShapeKind::torus: return {u(0.18, 0.28), u(0.05, 0.1)};
    case ShapeKind::cylinder: return {u(0.1, 0.25), u(0.12, 0.3)};
    case ShapeKind::capsule: return {u(0.08, 0.18), u(0.08, 0.18)};
    case ShapeKind::table: return {u(0.22, 0.33), u(0.22, 0.33), u(0.025, 0.04), u(0.025, 0.04), u(0.18, 0.3)};
    case ShapeKind::cup: return {u(0.15, 0.25), u(0.15, 0.3), u(0.03, 0.05)};
    case ShapeKind::ambiguous: return {static_cast<double>(rng.below(4))};
  }
  return {};
}

Vec3 random_euler(ShapeKind kind, Rng& rng) {
  const double two_pi = 2.0 * std::numbers::pi;
  switch (kind) {
    case ShapeKind::sphere:
    case ShapeKind::ambiguous: return {};
    case ShapeKind::table:
    case ShapeKind::cup: return {0.0, 0.0, rng.uniform(0.0, two_pi)};
    default: return {rng.uniform(0.0, two_pi), rng.uniform(0.0, two_pi), rng.uniform(0.0, two_pi)};
  }
}

bool fits(const ImplicitShape& s) {
  auto [lo, hi] = s.bounds();
  for (int a = 0; a < 3; ++a)
    if (lo[a] < kMargin || hi[a] > 1.0 - kMargin) return false;
  return true;
}

}  // namespace

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
    case ShapeKind::torus: return "torus";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::capsule: return "capsule";
    case ShapeKind::table: return "table";
    case ShapeKind::cup: return "cup";
    case ShapeKind::ambiguous: return "ambiguous";
  }
  return "?";
}

const std::vector<ShapeKind>& all_shape_kinds() {
  static const std::vector<ShapeKind> kinds{ShapeKind::sphere,  ShapeKind::box,   ShapeKind::torus, ShapeKind::cylinder,
                                            ShapeKind::capsule, ShapeKind::table, ShapeKind::cup,   ShapeKind::ambiguous};
  return kinds;
}

ShapeKind parse_shape_kind(const std::string& name) {
  for (auto k : all_shape_kinds())
    if (to_string(k) == name) return k;
  throw UsageError("unknown shape kind '" + name + "'");
}

std::size_t size_param_count(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere: return 1;
    case ShapeKind::box: return 3;
    case ShapeKind::torus: return 2;
    case ShapeKind::cylinder: return 2;
    case ShapeKind::capsule: return 2;
    case ShapeKind::table: return 5;
    case ShapeKind::cup: return 3;
    case ShapeKind::ambiguous: return 1;
  }
  return 0;
}

ImplicitShape::ImplicitShape(ShapeKind kind, std::vector<double> size, Vec3 center, Vec3 euler)
    : kind_(kind), size_(std::move(size)), center_(center), euler_(euler), rot_(rotation_xyz(euler)) {
  require(size_.size() == size_param_count(kind_), kind_,
          "expected " + std::to_string(size_param_count(kind_)) + " size parameters");
  validate_size(kind_, size_);
}

std::vector<double> ImplicitShape::params() const {
  std::vector<double> p = size_;
  for (int a = 0; a < 3; ++a) p.push_back(center_[a]);
  for (int a = 0; a < 3; ++a) p.push_back(euler_[a]);
  return p;
}

double ImplicitShape::local_sdf(const Vec3& q) const {
  const auto& s = size_;
  switch (kind_) {
    case ShapeKind::sphere: return norm(q) - s[0];
    case ShapeKind::box: return box_sdf(q, {s[0], s[1], s[2]});
    case ShapeKind::torus: return std::hypot(std::hypot(q.x, q.y) - s[0], q.z) - s[1];
    case ShapeKind::cylinder: return cylinder_sdf(q, s[0], s[1]);
    case ShapeKind::capsule: {
      Vec3 axis{0.0, 0.0, std::clamp(q.z, -s[1], s[1])};
      return norm(q - axis) - s[0];
    }
    case ShapeKind::table: {
      const double hx = s[0], hy = s[1], t = s[2], leg = s[3], h = s[4];
      double d = box_sdf(q - Vec3{0, 0, h - t}, {hx, hy, t});
      // legs are symmetric, so fold into the first quadrant
      Vec3 f{std::abs(q.x), std::abs(q.y), q.z};
      d = std::min(d, box_sdf(f - Vec3{hx - leg, hy - leg, -t}, {leg, leg, h - t}));
      return d;
    }
    case ShapeKind::cup: {
      const double r = s[0], h = s[1], wall = s[2];
      const double outer = cylinder_sdf(q, r, h);
      const double inner = cylinder_sdf(q - Vec3{0, 0, wall}, r - wall, h);
      return std::max(outer, -inner);
    }
    case ShapeKind::ambiguous: {
      const int v = static_cast<int>(s[0]);
      const double body = box_sdf(q - Vec3{kBodyShift, 0, 0}, {kBodyHalf, kBodyHalf, kBodyHalf});
      Vec3 knob{kBodyShift - kBodyHalf, (v & 1) ? kKnobOffset : -kKnobOffset, (v & 2) ? kKnobOffset : -kKnobOffset};
      return std::min(body, norm(q - knob) - kKnobRadius);
    }
  }
  return 0.0;
}

Vec3 ImplicitShape::local_half_extent() const {
  const auto& s = size_;
  switch (kind_) {
    case ShapeKind::sphere: return {s[0], s[0], s[0]};
    case ShapeKind::box: return {s[0], s[1], s[2]};
    case ShapeKind::torus: return {s[0] + s[1], s[0] + s[1], s[1]};
    case ShapeKind::cylinder: return {s[0], s[0], s[1]};
    case ShapeKind::capsule: return {s[0], s[0], s[1] + s[0]};
    case ShapeKind::table: return {s[0], s[1], s[4]};
    case ShapeKind::cup: return {s[0], s[0], s[1]};
    case ShapeKind::ambiguous: {
      const double x = std::max(kBodyShift + kBodyHalf, kKnobRadius - kBodyShift + kBodyHalf);
      return {x, kBodyHalf, kBodyHalf};
    }
  }
  return {};
}

double ImplicitShape::sdf(const Vec3& p) const {
  const Vec3 d = p - center_;
  // R^T d
  const Vec3 q{rot_[0] * d.x + rot_[3] * d.y + rot_[6] * d.z, rot_[1] * d.x + rot_[4] * d.y + rot_[7] * d.z,
               rot_[2] * d.x + rot_[5] * d.y + rot_[8] * d.z};
  return local_sdf(q);
}

Vec3 ImplicitShape::normal(const Vec3& p) const {
  constexpr double h = 1e-6;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 up = p, down = p;
    up[a] += h;
    down[a] -= h;
    g[a] = sdf(up) - sdf(down);
  }
  const double n = norm(g);
  return n > 0.0 ? g * (1.0 / n) : Vec3{0, 0, 1};
}

std::pair<Vec3, Vec3> ImplicitShape::bounds() const {
  const Vec3 e = local_half_extent();
  Vec3 half;
  if (kind_ == ShapeKind::sphere) {
    half = e;
  } else {
    for (int r = 0; r < 3; ++r)
      half[r] = std::abs(rot_[r * 3 + 0]) * e.x + std::abs(rot_[r * 3 + 1]) * e.y + std::abs(rot_[r * 3 + 2]) * e.z;
  }
  return {center_ - half, center_ + half};
}

ImplicitShape make_shape(ShapeKind kind, const std::vector<double>& params, std::uint64_t seed) {
  const std::size_t n = size_param_count(kind);
  if (params.empty()) {
    Rng rng(seed, Purpose::data, 0x5a);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      auto size = random_size(kind, rng);
      Vec3 euler = random_euler(kind, rng);
      ImplicitShape probe(kind, size, {0.5, 0.5, 0.5}, euler);
      if (kind == ShapeKind::ambiguous) return probe;
      auto [lo, hi] = probe.bounds();
      Vec3 center;
      bool ok = true;
      for (int a = 0; a < 3; ++a) {
        const double half = 0.5 * (hi[a] - lo[a]);
        const double slack = 0.5 - kMargin - half;
        if (slack < 0.0) ok = false;
        else center[a] = 0.5 + rng.uniform(-0.6, 0.6) * slack;
      }
      if (ok) return ImplicitShape(kind, std::move(size), center, euler);
    }
    throw DataError("could not draw a fitting " + to_string(kind));
  }
  if (params.size() != n && params.size() != n + 3 && params.size() != n + 6)
    throw UsageError(to_string(kind) + ": expected " + std::to_string(n) + ", " + std::to_string(n + 3) + " or " +
                     std::to_string(n + 6) + " parameters, got " + std::to_string(params.size()));
  std::vector<double> size(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(n));
  Vec3 center{0.5, 0.5, 0.5}, euler;
  if (params.size() >= n + 3) center = {params[n], params[n + 1], params[n + 2]};
  if (params.size() == n + 6) euler = {params[n + 3], params[n + 4], params[n + 5]};
  ImplicitShape shape(kind, std::move(size), center, euler);
  if (!fits(shape)) {
    auto [lo, hi] = shape.bounds();
    throw DataError(to_string(kind) + " does not fit the unit cube with margin: bounds (" + std::to_string(lo.x) + "," +
                    std::to_string(lo.y) + "," + std::to_string(lo.z) + ")-(" + std::to_string(hi.x) + "," +
                    std::to_string(hi.y) + "," + std::to_string(hi.z) + ")");
  }
  return shape;
}

ImplicitShape make_shape(const std::string& kind, const std::vector<double>& params, std::uint64_t seed) {
  return make_shape(parse_shape_kind(kind), params, seed);
}

}  // namespace vqsf::geo
