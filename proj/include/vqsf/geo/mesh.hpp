#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vqsf/geo/vec3.hpp"

namespace vqsf::geo {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  double area() const;
};

// Iso-surface of a G^3 scalar field stored row-major (x slowest), with grid
// point (i,j,k) at ((i,j,k) + 0.5) / G. Values > iso are inside; triangles
// wind counter-clockwise seen from outside. Vertices on a grid edge are
// shared between the cubes touching it, zero-area triangles are dropped.
Mesh marching_cubes(std::span<const float> values, std::size_t g, double iso);

// Area-weighted uniform samples from the mesh surface.
PointCloud sample_mesh_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed);

void write_obj(const std::filesystem::path& path, const Mesh& mesh);
Mesh read_obj(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_xyz(const std::filesystem::path& path);

}  // namespace vqsf::geo
