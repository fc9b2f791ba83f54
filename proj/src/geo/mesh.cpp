#include "vqsf/geo/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "vqsf/common/error.hpp"
#include "vqsf/common/rng.hpp"

namespace vqsf::geo {
namespace {

// Cube corner k sits at offset (k & 1, (k >> 1) & 1, (k >> 2) & 1).
struct CubeEdge {
  int a, b;  // corners, a < b
  int axis;
};

struct CaseTable {
  std::array<CubeEdge, 12> edges;
  // Per corner mask: closed loops of cube-edge ids, wound outward.
  std::array<std::vector<std::vector<int>>, 256> loops;
  // Per corner mask: triangles as cube-edge id triples.
  std::array<std::vector<std::array<int, 3>>, 256> triangles;
};

bool on_common_face(const CubeEdge& p, const CubeEdge& q) {
  for (int axis = 0; axis < 3; ++axis) {
    if (axis == p.axis || axis == q.axis) continue;
    if (((p.a >> axis) & 1) == ((q.a >> axis) & 1)) return true;
  }
  return false;
}

// Triangulates loop[lo..hi] (lo-hi is already an edge) without diagonals that
// lie in a cube face: such a diagonal could coincide with one from the
// neighbouring cube and leave an edge shared by four triangles.
bool triangulate(const CaseTable& t, const std::vector<int>& loop, std::size_t lo, std::size_t hi,
                 std::vector<std::array<int, 3>>& out) {
  if (hi - lo < 2) return true;
  auto ok = [&](std::size_t i, std::size_t j) {
    const bool boundary = j == i + 1 || (i == 0 && j == loop.size() - 1);
    return boundary || !on_common_face(t.edges[loop[i]], t.edges[loop[j]]);
  };
  for (std::size_t k = lo + 1; k < hi; ++k) {
    if (!ok(lo, k) || !ok(k, hi)) continue;
    std::vector<std::array<int, 3>> tris{{loop[lo], loop[k], loop[hi]}};
    if (triangulate(t, loop, lo, k, tris) && triangulate(t, loop, k, hi, tris)) {
      out.insert(out.end(), tris.begin(), tris.end());
      return true;
    }
  }
  return false;
}

// Builds the 256-case table from the cube's face structure. On each face the
// crossing edges that bracket a run of inside corners are joined, which
// separates diagonal inside corners on ambiguous faces. Both cubes sharing a
// face apply the same rule, so the surface stays closed. Segments are
// directed from the run's exit edge to its entry edge in counter-clockwise
// face order; every crossing edge is then the exit of one face and the entry
// of the other, so the segments chain into loops.
CaseTable build_case_table() {
  CaseTable t;
  int n = 0;
  int edge_of[8][8];
  for (int a = 0; a < 8; ++a)
    for (int axis = 0; axis < 3; ++axis) {
      const int b = a | (1 << axis);
      if (b == a) continue;
      t.edges[n] = {a, b, axis};
      edge_of[a][b] = edge_of[b][a] = n;
      ++n;
    }

  std::vector<std::array<int, 4>> faces;
  for (int axis = 0; axis < 3; ++axis) {
    const int b = (axis + 1) % 3, c = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      // (u, v) is a right-handed frame around the outward normal
      const int u = side ? b : c, v = side ? c : b;
      std::array<int, 4> cyc{};
      const int uv[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
      for (int i = 0; i < 4; ++i) cyc[i] = (side << axis) | (uv[i][0] << u) | (uv[i][1] << v);
      faces.push_back(cyc);
    }
  }

  for (int mask = 0; mask < 256; ++mask) {
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& cyc : faces) {
      bool in[4];
      for (int i = 0; i < 4; ++i) in[i] = (mask >> cyc[i]) & 1;
      for (int i = 0; i < 4; ++i) {
        if (in[i] || !in[(i + 1) % 4]) continue;
        const int enter = edge_of[cyc[i]][cyc[(i + 1) % 4]];
        int j = (i + 1) % 4;
        while (in[(j + 1) % 4]) j = (j + 1) % 4;
        const int exit = edge_of[cyc[j]][cyc[(j + 1) % 4]];
        next[exit] = enter;
      }
    }
    std::array<bool, 12> used{};
    for (int e = 0; e < 12; ++e) {
      if (next[e] < 0 || used[e]) continue;
      std::vector<int> loop;
      for (int cur = e; !used[cur]; cur = next[cur]) {
        used[cur] = true;
        loop.push_back(cur);
      }
      t.loops[mask].push_back(std::move(loop));
    }
  }

  // Fix the winding once: with only corner 0 inside, the normal must point
  // away from corner 0.
  auto mid = [&](int e) {
    Vec3 p;
    for (int k : {t.edges[e].a, t.edges[e].b}) p += Vec3{double(k & 1), double((k >> 1) & 1), double((k >> 2) & 1)} * 0.5;
    return p;
  };
  const auto& l = t.loops[1].front();
  const Vec3 normal = cross(mid(l[1]) - mid(l[0]), mid(l[2]) - mid(l[0]));
  if (dot(normal, Vec3{1, 1, 1}) < 0.0)
    for (auto& loops : t.loops)
      for (auto& loop : loops) std::reverse(loop.begin(), loop.end());

  for (int mask = 0; mask < 256; ++mask)
    for (const auto& loop : t.loops[mask])
      if (!triangulate(t, loop, 0, loop.size() - 1, t.triangles[mask]))
        throw std::logic_error("marching cubes: no valid triangulation for case " + std::to_string(mask));
  return t;
}

const CaseTable& case_table() {
  static const CaseTable table = build_case_table();
  return table;
}

}  // namespace

double Mesh::area() const {
  double a = 0.0;
  for (const auto& t : triangles)
    a += 0.5 * norm(cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]));
  return a;
}

Mesh marching_cubes(std::span<const float> values, std::size_t g, double iso) {
  if (values.size() != g * g * g)
    throw DataError("marching_cubes: " + std::to_string(values.size()) + " values for a " + std::to_string(g) + "^3 grid");
  for (float v : values)
    if (!std::isfinite(v)) throw DataError("marching_cubes: non-finite field value");
  const CaseTable& table = case_table();
  Mesh mesh;
  if (g < 2) return mesh;

  auto at = [&](std::size_t x, std::size_t y, std::size_t z) { return static_cast<double>(values[(x * g + y) * g + z]); };
  std::vector<std::int32_t> vertex_of(g * g * g * 3, -1);
  const double scale = 1.0 / static_cast<double>(g);

  for (std::size_t x = 0; x + 1 < g; ++x)
    for (std::size_t y = 0; y + 1 < g; ++y)
      for (std::size_t z = 0; z + 1 < g; ++z) {
        double corner[8];
        int mask = 0;
        for (int k = 0; k < 8; ++k) {
          corner[k] = at(x + (k & 1), y + ((k >> 1) & 1), z + ((k >> 2) & 1));
          if (corner[k] > iso) mask |= 1 << k;
        }
        if (mask == 0 || mask == 255) continue;

        auto vertex = [&](int e) {
          const auto& edge = table.edges[e];
          const std::size_t gx = x + (edge.a & 1), gy = y + ((edge.a >> 1) & 1), gz = z + ((edge.a >> 2) & 1);
          auto& slot = vertex_of[((gx * g + gy) * g + gz) * 3 + edge.axis];
          if (slot < 0) {
            const double v0 = corner[edge.a], v1 = corner[edge.b];
            const double t = (iso - v0) / (v1 - v0);
            Vec3 p{gx + 0.5, gy + 0.5, gz + 0.5};
            p[edge.axis] += t;
            slot = static_cast<std::int32_t>(mesh.vertices.size());
            mesh.vertices.push_back(p * scale);
          }
          return static_cast<std::uint32_t>(slot);
        };

        for (const auto& tri : table.triangles[mask]) {
          const std::uint32_t v0 = vertex(tri[0]), v1 = vertex(tri[1]), v2 = vertex(tri[2]);
          const Vec3& a = mesh.vertices[v0];
          const Vec3 c = cross(mesh.vertices[v1] - a, mesh.vertices[v2] - a);
          if (dot(c, c) <= 0.0) continue;
          mesh.triangles.push_back({v0, v1, v2});
        }
      }
  return mesh;
}

PointCloud sample_mesh_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.triangles.empty()) throw DataError("cannot sample an empty mesh");
  std::vector<double> cumulative;
  cumulative.reserve(mesh.triangles.size());
  double total = 0.0;
  for (const auto& t : mesh.triangles) {
    total += 0.5 * norm(cross(mesh.vertices[t[1]] - mesh.vertices[t[0]], mesh.vertices[t[2]] - mesh.vertices[t[0]]));
    cumulative.push_back(total);
  }
  Rng rng(seed, Purpose::data, 0x4d);
  PointCloud out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rng.uniform() * total;
    std::size_t k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
    k = std::min(k, cumulative.size() - 1);
    double a = rng.uniform(), b = rng.uniform();
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const auto& t = mesh.triangles[k];
    const Vec3& p0 = mesh.vertices[t[0]];
    Vec3 p = p0 + (mesh.vertices[t[1]] - p0) * a + (mesh.vertices[t[2]] - p0) * b;
    for (int ax = 0; ax < 3; ++ax) p[ax] = std::clamp(p[ax], 0.0, kUnitMax);
    out.push_back(p);
  }
  return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return in;
}

std::string fmt_point(const char* prefix, const Vec3& p) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s%.7f %.7f %.7f\n", prefix, p.x, p.y, p.z);
  return buf;
}

}  // namespace

void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
  auto out = open_out(path);
  for (const auto& v : mesh.vertices) out << fmt_point("v ", v);
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

Mesh read_obj(const std::filesystem::path& path) {
  auto in = open_in(path);
  Mesh mesh;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z)) throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::array<std::uint32_t, 3> t{};
      for (auto& idx : t) {
        std::string tok;
        if (!(ls >> tok)) throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed face");
        long v = std::stol(tok.substr(0, tok.find('/')));
        if (v < 1 || static_cast<std::size_t>(v) > mesh.vertices.size())
          throw DataError(path.string() + ":" + std::to_string(line_no) + ": face index out of range");
        idx = static_cast<std::uint32_t>(v - 1);
      }
      mesh.triangles.push_back(t);
    }
  }
  return mesh;
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  for (const auto& p : cloud) out << fmt_point("", p);
  if (!out) throw DataError("failed writing " + path.string());
}

PointCloud read_xyz(const std::filesystem::path& path) {
  auto in = open_in(path);
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Vec3 p;
    std::string extra;
    if (!(ls >> p.x >> p.y >> p.z) || (ls >> extra))
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'x y z'");
    for (int a = 0; a < 3; ++a)
      if (!(p[a] >= 0.0 && p[a] < 1.0))
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": coordinate outside [0,1)");
    cloud.push_back(p);
  }
  if (cloud.empty()) throw DataError(path.string() + ": no points");
  return cloud;
}

}  // namespace vqsf::geo
