#include "vqsf/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vqsf/common/error.hpp"

namespace vqsf::metrics {
namespace {

constexpr std::size_t kBruteForceBelow = 64;

void require_nonempty(const PointCloud& c, const char* what) {
  if (c.empty()) throw DataError(std::string(what) + ": empty point cloud");
}

}  // namespace

NearestNeighbor::NearestNeighbor(const PointCloud& cloud) : points_(cloud) {
  require_nonempty(points_, "nearest neighbour");
  brute_ = points_.size() < kBruteForceBelow;
  if (brute_) return;

  Vec3 hi = points_[0];
  lo_ = points_[0];
  for (const auto& p : points_)
    for (int a = 0; a < 3; ++a) {
      lo_[a] = std::min(lo_[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  const double extent = std::max({hi.x - lo_.x, hi.y - lo_.y, hi.z - lo_.z, 1e-12});
  // roughly two points per occupied cell for surface-like clouds
  const double per_axis = std::clamp(std::sqrt(static_cast<double>(points_.size()) / 2.0), 1.0, 128.0);
  cell_ = extent / per_axis;
  for (int a = 0; a < 3; ++a) res_[a] = std::max(1, static_cast<int>(std::floor((hi[a] - lo_[a]) / cell_)) + 1);

  const std::size_t n_cells = static_cast<std::size_t>(res_[0]) * res_[1] * res_[2];
  start_.assign(n_cells + 1, 0);
  std::vector<std::size_t> cell_of(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    cell_of[i] = cell_index(coord(p.x, 0), coord(p.y, 1), coord(p.z, 2));
    start_[cell_of[i] + 1]++;
  }
  std::partial_sum(start_.begin(), start_.end(), start_.begin());
  order_.resize(points_.size());
  std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) order_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
}

std::size_t NearestNeighbor::cell_index(int x, int y, int z) const {
  return (static_cast<std::size_t>(x) * res_[1] + y) * res_[2] + z;
}

int NearestNeighbor::coord(double v, int axis) const {
  const double c = std::floor((v - lo_[axis]) / cell_);
  return static_cast<int>(std::clamp(c, 0.0, static_cast<double>(res_[axis] - 1)));
}

double NearestNeighbor::distance2(const Vec3& q) const {
  double best = std::numeric_limits<double>::infinity();
  if (brute_) {
    for (const auto& p : points_) best = std::min(best, geo::distance2(q, p));
    return best;
  }
  const int cx = coord(q.x, 0), cy = coord(q.y, 1), cz = coord(q.z, 2);
  const int max_ring = std::max({res_[0], res_[1], res_[2]});
  for (int ring = 0; ring <= max_ring; ++ring) {
    // every cell of this ring lies at least (ring - 1) cells away from q
    if (ring >= 2) {
      const double gap = (ring - 1) * cell_;
      if (gap * gap > best) break;
    }
    for (int x = cx - ring; x <= cx + ring; ++x) {
      if (x < 0 || x >= res_[0]) continue;
      for (int y = cy - ring; y <= cy + ring; ++y) {
        if (y < 0 || y >= res_[1]) continue;
        const bool shell_xy = std::abs(x - cx) == ring || std::abs(y - cy) == ring;
        for (int z = cz - ring; z <= cz + ring; z += (shell_xy ? 1 : std::max(1, 2 * ring))) {
          if (z < 0 || z >= res_[2]) continue;
          const std::size_t c = cell_index(x, y, z);
          for (std::uint32_t k = start_[c]; k < start_[c + 1]; ++k) best = std::min(best, geo::distance2(q, points_[order_[k]]));
        }
      }
    }
  }
  return best;
}

std::vector<double> nearest_distances2(const PointCloud& from, const PointCloud& to) {
  require_nonempty(from, "nearest neighbour");
  NearestNeighbor nn(to);
  std::vector<double> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) out[i] = nn.distance2(from[i]);
  return out;
}

double chamfer_l2(const PointCloud& a, const PointCloud& b) {
  require_nonempty(a, "chamfer_l2");
  require_nonempty(b, "chamfer_l2");
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  return mean(nearest_distances2(a, b)) + mean(nearest_distances2(b, a));
}

double default_fscore_threshold(const PointCloud& gt) {
  require_nonempty(gt, "fscore");
  Vec3 lo = gt[0], hi = gt[0];
  for (const auto& p : gt)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  return 0.01 * geo::norm(hi - lo);
}

double fscore(const PointCloud& pred, const PointCloud& gt, double tau) {
  require_nonempty(pred, "fscore");
  require_nonempty(gt, "fscore");
  const double t2 = tau * tau;
  auto within = [&](const std::vector<double>& d2) {
    return static_cast<double>(std::count_if(d2.begin(), d2.end(), [&](double d) { return d <= t2; })) / d2.size();
  };
  const double precision = within(nearest_distances2(pred, gt));
  const double recall = within(nearest_distances2(gt, pred));
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double fscore(const PointCloud& pred, const PointCloud& gt) { return fscore(pred, gt, default_fscore_threshold(gt)); }

double uhd(const PointCloud& partial, const PointCloud& completion) {
  require_nonempty(partial, "uhd");
  require_nonempty(completion, "uhd");
  auto d2 = nearest_distances2(partial, completion);
  return std::sqrt(*std::max_element(d2.begin(), d2.end()));
}

double tmd(std::span<const PointCloud> completions) {
  const std::size_t k = completions.size();
  if (k < 2) throw DataError("tmd needs at least 2 completions, got " + std::to_string(k));
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) row += chamfer_l2(completions[i], completions[j]);
    total += row / static_cast<double>(k - 1);
  }
  return total;
}

double mmd(std::span<const PointCloud> generated, std::span<const PointCloud> reference) {
  if (generated.empty() || reference.empty()) throw DataError("mmd: empty shape set");
  double total = 0.0;
  for (const auto& r : reference) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& g : generated) best = std::min(best, chamfer_l2(g, r));
    total += best;
  }
  return total / static_cast<double>(reference.size());
}

std::vector<double> farthest_distances(const PointCloud& complete) {
  if (complete.size() < 2) throw DataError("ambiguity: complete cloud needs at least 2 points");
  std::vector<double> far(complete.size(), 0.0);
  for (std::size_t i = 0; i < complete.size(); ++i)
    for (std::size_t j = i + 1; j < complete.size(); ++j) {
      const double d = geo::distance2(complete[i], complete[j]);
      far[i] = std::max(far[i], d);
      far[j] = std::max(far[j], d);
    }
  for (auto& f : far) {
    if (f == 0.0) throw DataError("ambiguity: complete cloud has zero extent");
    f = std::sqrt(f);
  }
  return far;
}

double ambiguity(const PointCloud& complete, const std::vector<double>& farthest, const PointCloud& partial) {
  require_nonempty(partial, "ambiguity");
  if (farthest.size() != complete.size()) throw DataError("ambiguity: farthest distances do not match the cloud");
  auto d2 = nearest_distances2(complete, partial);
  double total = 0.0;
  for (std::size_t i = 0; i < complete.size(); ++i) total += std::sqrt(d2[i]) / farthest[i];
  return total / static_cast<double>(complete.size());
}

double ambiguity(const PointCloud& complete, const PointCloud& partial) {
  return ambiguity(complete, farthest_distances(complete), partial);
}

ViewRanking rank_views(std::vector<double> scores) {
  if (scores.size() < 2) throw DataError("rank_views needs at least 2 views");
  ViewRanking r;
  r.scores = std::move(scores);
  r.order.resize(r.scores.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](auto a, auto b) { return r.scores[a] < r.scores[b]; });
  const std::size_t half = r.order.size() / 2;
  r.low.assign(r.order.begin(), r.order.begin() + static_cast<std::ptrdiff_t>(r.order.size() - half));
  r.high.assign(r.order.end() - static_cast<std::ptrdiff_t>(half), r.order.end());
  return r;
}

ViewRanking rank_views(const geo::ImplicitShape& shape, const std::vector<Vec3>& viewpoints, std::uint64_t seed,
                       const RankOptions& options) {
  const PointCloud complete = geo::sample_surface(shape, options.complete_points, seed);
  const auto far = farthest_distances(complete);
  std::vector<double> scores;
  scores.reserve(viewpoints.size());
  for (std::size_t v = 0; v < viewpoints.size(); ++v) {
    const PointCloud scan = geo::virtual_scan(shape, viewpoints[v], options.scan_points, seed + 1 + v, options.scan);
    scores.push_back(ambiguity(complete, far, scan));
  }
  return rank_views(std::move(scores));
}

CodebookStats codebook_stats(std::span<const std::uint64_t> histogram) {
  const double total = static_cast<double>(std::accumulate(histogram.begin(), histogram.end(), std::uint64_t{0}));
  if (histogram.empty() || total == 0.0) throw DataError("codebook_stats: empty histogram");
  CodebookStats s;
  double entropy = 0.0;
  std::size_t used = 0;
  for (auto c : histogram) {
    if (c == 0) continue;
    ++used;
    const double p = static_cast<double>(c) / total;
    entropy -= p * std::log(p);
  }
  s.usage = static_cast<double>(used) / static_cast<double>(histogram.size());
  s.perplexity = std::exp(entropy);
  return s;
}

}  // namespace vqsf::metrics
