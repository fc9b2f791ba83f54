#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vqsf/geo/vec3.hpp"

namespace vqsf::geo {

// Every shape must fit inside [kMargin, 1 - kMargin]^3.
inline constexpr double kMargin = 0.05;

enum class ShapeKind { sphere, box, torus, cylinder, capsule, table, cup, ambiguous };

std::string to_string(ShapeKind kind);
ShapeKind parse_shape_kind(const std::string& name);  // UsageError on unknown names
const std::vector<ShapeKind>& all_shape_kinds();

// Number of size parameters for a kind (pose parameters come after these).
//   sphere    [r]
//   box       [hx, hy, hz]                      half extents
//   torus     [R, r]                            about the local z axis
//   cylinder  [r, h]                            h = half height, axis z
//   capsule   [r, h]                            h = half segment length, axis z
//   table     [hx, hy, t, leg, h]               top half extents, top half thickness,
//                                               leg half width, overall half height
//   cup       [r, h, wall]                      open at +z
//   ambiguous [variant]                         cube body, knob on the -x side at one of
//                                               four positions (variant 0..3)
std::size_t size_param_count(ShapeKind kind);

// Closed-form solid with a rigid pose. sdf is exact or a conservative
// (1-Lipschitz) bound for the boolean composites; inside(x) <=> sdf(x) <= 0.
class ImplicitShape {
 public:
  ImplicitShape(ShapeKind kind, std::vector<double> size, Vec3 center, Vec3 euler);

  ShapeKind kind() const { return kind_; }
  const std::vector<double>& size_params() const { return size_; }
  Vec3 center() const { return center_; }
  Vec3 euler() const { return euler_; }
  // size params followed by center (3) and euler angles (3)
  std::vector<double> params() const;

  double sdf(const Vec3& p) const;
  bool inside(const Vec3& p) const { return sdf(p) <= 0.0; }
  // Central-difference gradient of sdf, normalized.
  Vec3 normal(const Vec3& p) const;

  // World-space box enclosing the shape.
  std::pair<Vec3, Vec3> bounds() const;

 private:
  double local_sdf(const Vec3& q) const;
  Vec3 local_half_extent() const;

  ShapeKind kind_;
  std::vector<double> size_;
  Vec3 center_, euler_;
  std::array<double, 9> rot_{};  // local -> world, row-major
};

// params may hold the size parameters only, size + center, or size + center
// + euler (XYZ, radians); missing pose parts default to the cube centre and
// no rotation. Empty params draw a random shape of that kind from `seed`.
// Throws UsageError for invalid params and DataError if the posed shape
// leaves the margin cube.
ImplicitShape make_shape(ShapeKind kind, const std::vector<double>& params, std::uint64_t seed);
ImplicitShape make_shape(const std::string& kind, const std::vector<double>& params, std::uint64_t seed);

}  // namespace vqsf::geo
