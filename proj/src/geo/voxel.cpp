#include "vqsf/geo/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vqsf/common/error.hpp"

namespace vqsf::geo {

std::array<std::uint32_t, 3> cell_of(const Vec3& p, std::uint32_t r) {
  std::array<std::uint32_t, 3> c{};
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= 0.0 && p[a] < 1.0))
      throw DataError("point coordinate " + std::to_string(p[a]) + " outside [0,1)");
    // floor(p*R) can round up to R for p just below 1
    c[a] = std::min(static_cast<std::uint32_t>(std::floor(p[a] * r)), r - 1);
  }
  return c;
}

std::vector<std::uint32_t> voxelize(const PointCloud& cloud, std::uint32_t r) {
  if (r < 2) throw UsageError("voxelize: resolution must be at least 2");
  std::vector<std::uint32_t> cells;
  cells.reserve(cloud.size());
  for (const auto& p : cloud) {
    auto c = cell_of(p, r);
    cells.push_back(ravel(c[0], c[1], c[2], r));
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

}  // namespace vqsf::geo
