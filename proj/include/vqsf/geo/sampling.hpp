#pragma once

#include <cstdint>
#include <vector>

#include "vqsf/geo/shape.hpp"

namespace vqsf::geo {

// N points with |sdf| < 1e-4, approximately uniform over surface area.
// Candidates are drawn uniformly from the thin shell |sdf| < h around the
// surface (h = half a 1/128 cell), located through a coarse-to-fine cell
// search, then projected onto the zero level set by Newton steps along the
// sdf gradient.
PointCloud sample_surface(const ImplicitShape& shape, std::size_t n, std::uint64_t seed);

struct ScanOptions {
  std::size_t resolution = 128;   // depth buffer is resolution^2
  double camera_distance = 2.0;   // from the cube centre
  double half_width = 0.8;        // orthographic window half size
  double depth_tolerance = 2.0 / 128.0;
  double noise_sigma = 0.0;       // optional isotropic jitter of returned points
};

// Partial observation of `shape` seen from direction `viewpoint` (unit vector
// from the cube centre towards the camera). Dense surface samples are kept
// when their depth matches the ray-marched depth buffer; at pixels where the
// buffer is discontinuous (silhouettes, occlusion edges) the point's own ray
// is marched instead. The result is subsampled to at most n points and throws
// DataError when nothing is visible.
PointCloud virtual_scan(const ImplicitShape& shape, const Vec3& viewpoint, std::size_t n, std::uint64_t seed,
                        const ScanOptions& options = {});

// (n_total - 6) Fibonacci-lattice directions followed by +x, -x, +y, -y, +z, -z.
std::vector<Vec3> fibonacci_viewpoints(std::size_t n_total = 70);

struct OccupancyTargets {
  std::vector<Vec3> points;
  std::vector<std::uint8_t> occupancy;
};

struct TargetOptions {
  double sigma_near = 0.01;
  double sigma_far = 0.05;
  double uniform_fraction = 0.2;
};

// round(uniform_fraction * T) uniform points, then the remainder split
// between surface points jittered by N(0, sigma_near^2) (ceil half) and by
// N(0, sigma_far^2). Points are clamped into [0,1).
OccupancyTargets sample_occupancy_targets(const ImplicitShape& shape, std::size_t t, const TargetOptions& options,
                                          std::uint64_t seed);

}  // namespace vqsf::geo
