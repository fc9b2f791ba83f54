#include "vqsf/geo/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "vqsf/common/error.hpp"
#include "vqsf/common/rng.hpp"

namespace vqsf::geo {
namespace {

constexpr int kCoarse = 32;
constexpr int kFine = 128;
constexpr double kShell = 0.5 / kFine;
constexpr double kOnSurface = 1e-6;

// Stream indices inside Purpose::data.
constexpr std::uint64_t kSurfaceStream = 0x51;
constexpr std::uint64_t kScanStream = 0x52;
constexpr std::uint64_t kTargetStream = 0x53;

Vec3 cell_center(int x, int y, int z, int res) {
  const double s = 1.0 / res;
  return {(x + 0.5) * s, (y + 0.5) * s, (z + 0.5) * s};
}

Vec3 sdf_gradient(const ImplicitShape& shape, const Vec3& p) {
  constexpr double h = 1e-7;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 up = p, down = p;
    up[a] += h;
    down[a] -= h;
    g[a] = (shape.sdf(up) - shape.sdf(down)) / (2.0 * h);
  }
  return g;
}

bool project_to_surface(const ImplicitShape& shape, Vec3& p) {
  for (int it = 0; it < 50; ++it) {
    const double d = shape.sdf(p);
    if (std::abs(d) < kOnSurface) return true;
    const Vec3 g = sdf_gradient(shape, p);
    const double g2 = dot(g, g);
    if (g2 < 1e-12) return false;
    p -= g * (d / g2);
  }
  return false;
}

double clamp_unit(double x) { return std::clamp(x, 0.0, kUnitMax); }

}  // namespace

PointCloud sample_surface(const ImplicitShape& shape, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw UsageError("sample_surface: N must be at least 1");
  const double coarse_reach = std::sqrt(3.0) * 0.5 / kCoarse + kShell;
  const double fine_reach = std::sqrt(3.0) * 0.5 / kFine + kShell;
  constexpr int kSub = kFine / kCoarse;

  std::vector<std::array<int, 3>> cells;
  for (int x = 0; x < kCoarse; ++x)
    for (int y = 0; y < kCoarse; ++y)
      for (int z = 0; z < kCoarse; ++z) {
        if (std::abs(shape.sdf(cell_center(x, y, z, kCoarse))) > coarse_reach) continue;
        for (int i = 0; i < kSub; ++i)
          for (int j = 0; j < kSub; ++j)
            for (int k = 0; k < kSub; ++k) {
              const int fx = x * kSub + i, fy = y * kSub + j, fz = z * kSub + k;
              if (std::abs(shape.sdf(cell_center(fx, fy, fz, kFine))) <= fine_reach) cells.push_back({fx, fy, fz});
            }
      }
  if (cells.empty()) throw DataError("sample_surface: " + to_string(shape.kind()) + " has no surface inside the cube");

  Rng rng(seed, Purpose::data, kSurfaceStream);
  PointCloud out;
  out.reserve(n);
  const double s = 1.0 / kFine;
  std::size_t draws = 0;
  while (out.size() < n) {
    if (++draws > 1000 * n + 1000000) throw DataError("sample_surface: rejection sampling did not converge");
    const auto& c = cells[rng.below(cells.size())];
    Vec3 p{(c[0] + rng.uniform()) * s, (c[1] + rng.uniform()) * s, (c[2] + rng.uniform()) * s};
    if (std::abs(shape.sdf(p)) >= kShell) continue;
    if (!project_to_surface(shape, p)) continue;
    bool in_cube = true;
    for (int a = 0; a < 3; ++a) in_cube = in_cube && p[a] >= 0.0 && p[a] < 1.0;
    if (in_cube) out.push_back(p);
  }
  return out;
}

namespace {

struct Camera {
  Vec3 origin;  // centre of the image plane
  Vec3 dir;     // viewing direction
  Vec3 u, w;    // image axes
};

Camera make_camera(const Vec3& viewpoint, double distance) {
  const double len = norm(viewpoint);
  if (!(len > 0.0) || !std::isfinite(len)) throw UsageError("virtual_scan: viewpoint must be a non-zero vector");
  const Vec3 v = viewpoint * (1.0 / len);
  const Vec3 helper = std::abs(v.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 u = normalized(cross(v, helper));
  return {Vec3{0.5, 0.5, 0.5} + v * distance, -v, u, cross(v, u)};
}

// Sphere tracing; +inf when the ray leaves the scene.
double march(const ImplicitShape& shape, const Vec3& origin, const Vec3& dir, double max_t) {
  double t = 0.0;
  for (int it = 0; it < 1024; ++it) {
    const double d = shape.sdf(origin + dir * t);
    if (d < kOnSurface) return t;
    t += d;
    if (t > max_t) break;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

PointCloud virtual_scan(const ImplicitShape& shape, const Vec3& viewpoint, std::size_t n, std::uint64_t seed,
                        const ScanOptions& opt) {
  if (n == 0) throw UsageError("virtual_scan: N must be at least 1");
  const Camera cam = make_camera(viewpoint, opt.camera_distance);
  const int res = static_cast<int>(opt.resolution);
  const double pixel = 2.0 * opt.half_width / res;
  const double max_t = 2.0 * opt.camera_distance + 2.0;

  std::vector<double> depth(static_cast<std::size_t>(res) * res);
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      const Vec3 o = cam.origin + cam.u * (-opt.half_width + (i + 0.5) * pixel) + cam.w * (-opt.half_width + (j + 0.5) * pixel);
      depth[static_cast<std::size_t>(i) * res + j] = march(shape, o, cam.dir, max_t);
    }

  // Pixels whose 3x3 neighbourhood has a depth jump or a miss get exact per-point rays.
  std::vector<std::uint8_t> smooth(depth.size(), 0);
  for (int i = 1; i + 1 < res; ++i)
    for (int j = 1; j + 1 < res; ++j) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const double d = depth[static_cast<std::size_t>(i + di) * res + (j + dj)];
          lo = std::min(lo, d);
          hi = std::max(hi, d);
        }
      smooth[static_cast<std::size_t>(i) * res + j] = std::isfinite(hi) && hi - lo <= opt.depth_tolerance;
    }

  const PointCloud dense = sample_surface(shape, std::max<std::size_t>(4 * n, 4096), splitmix64(seed ^ 0x5ca9));
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < dense.size(); ++k) {
    const Vec3& p = dense[k];
    const Vec3 rel = p - cam.origin;
    const double su = dot(rel, cam.u), sw = dot(rel, cam.w), dp = dot(rel, cam.dir);
    const int i = static_cast<int>(std::floor((su + opt.half_width) / pixel));
    const int j = static_cast<int>(std::floor((sw + opt.half_width) / pixel));
    if (i < 0 || j < 0 || i >= res || j >= res) continue;
    const std::size_t idx = static_cast<std::size_t>(i) * res + j;
    double hit = depth[idx];
    if (!smooth[idx]) hit = march(shape, cam.origin + cam.u * su + cam.w * sw, cam.dir, max_t);
    if (dp <= hit + opt.depth_tolerance) kept.push_back(k);
  }
  if (kept.empty()) throw DataError("virtual_scan: empty scan, no surface visible from the viewpoint");

  Rng rng(seed, Purpose::data, kScanStream);
  if (kept.size() > n) {
    rng.shuffle(std::span(kept));
    kept.resize(n);
    std::sort(kept.begin(), kept.end());
  }
  PointCloud out;
  out.reserve(kept.size());
  for (auto k : kept) {
    Vec3 p = dense[k];
    if (opt.noise_sigma > 0.0)
      for (int a = 0; a < 3; ++a) p[a] = clamp_unit(p[a] + rng.normal(0.0, opt.noise_sigma));
    out.push_back(p);
  }
  return out;
}

std::vector<Vec3> fibonacci_viewpoints(std::size_t n_total) {
  if (n_total < 6) throw UsageError("fibonacci_viewpoints: need at least 6 views");
  const std::size_t m = n_total - 6;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> out;
  out.reserve(n_total);
  for (std::size_t i = 0; i < m; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / static_cast<double>(m);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    out.push_back({r * std::cos(phi), r * std::sin(phi), z});
  }
  for (int a = 0; a < 3; ++a)
    for (double s : {1.0, -1.0}) {
      Vec3 v;
      v[a] = s;
      out.push_back(v);
    }
  return out;
}

OccupancyTargets sample_occupancy_targets(const ImplicitShape& shape, std::size_t t, const TargetOptions& opt,
                                          std::uint64_t seed) {
  if (t == 0) throw UsageError("sample_occupancy_targets: T must be at least 1");
  if (!(opt.sigma_near >= 0.0 && opt.sigma_near < opt.sigma_far))
    throw UsageError("sample_occupancy_targets: need 0 <= sigma_near < sigma_far");
  if (!(opt.uniform_fraction >= 0.0 && opt.uniform_fraction <= 1.0))
    throw UsageError("sample_occupancy_targets: uniform_fraction must lie in [0,1]");

  const auto n_uniform = std::min<std::size_t>(t, static_cast<std::size_t>(std::llround(opt.uniform_fraction * t)));
  const std::size_t rest = t - n_uniform;
  const std::size_t n_near = (rest + 1) / 2;

  Rng rng(seed, Purpose::data, kTargetStream);
  OccupancyTargets out;
  out.points.reserve(t);
  for (std::size_t i = 0; i < n_uniform; ++i) out.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  if (rest > 0) {
    const PointCloud surface = sample_surface(shape, rest, splitmix64(seed ^ 0x7a9e));
    for (std::size_t i = 0; i < rest; ++i) {
      const double sigma = i < n_near ? opt.sigma_near : opt.sigma_far;
      Vec3 p = surface[i];
      if (sigma > 0.0)
        for (int a = 0; a < 3; ++a) p[a] = clamp_unit(p[a] + rng.normal(0.0, sigma));
      out.points.push_back(p);
    }
  }
  out.occupancy.reserve(t);
  for (const auto& p : out.points) out.occupancy.push_back(shape.inside(p) ? 1 : 0);
  return out;
}

}  // namespace vqsf::geo
