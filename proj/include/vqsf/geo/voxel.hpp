#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vqsf/geo/vec3.hpp"

namespace vqsf::geo {

// Row-major raveled cell index c = x * R^2 + y * R + z.
inline std::uint32_t ravel(std::uint32_t x, std::uint32_t y, std::uint32_t z, std::uint32_t r) {
  return (x * r + y) * r + z;
}
inline std::array<std::uint32_t, 3> unravel(std::uint32_t c, std::uint32_t r) {
  return {c / (r * r), (c / r) % r, c % r};
}

// Cell of a point: floor(p * R) per axis. DataError outside [0,1)^3.
std::array<std::uint32_t, 3> cell_of(const Vec3& p, std::uint32_t r);

// Occupied cells of the cloud at resolution R as sorted, unique raveled indices.
std::vector<std::uint32_t> voxelize(const PointCloud& cloud, std::uint32_t r);

}  // namespace vqsf::geo
