#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vqsf/geo/sampling.hpp"
#include "vqsf/geo/vec3.hpp"

namespace vqsf::metrics {

using geo::PointCloud;
using geo::Vec3;

// Exact nearest-neighbour queries against a fixed cloud. Uses a uniform grid
// over the cloud's bounding box, or a linear scan below 64 points. Squared
// distances are computed exactly as a brute-force scan would, so results
// match it bit for bit.
class NearestNeighbor {
 public:
  explicit NearestNeighbor(const PointCloud& cloud);
  // Squared distance to the nearest point.
  double distance2(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  std::size_t cell_index(int x, int y, int z) const;
  int coord(double v, int axis) const;

  PointCloud points_;
  Vec3 lo_;
  double cell_ = 1.0;
  int res_[3] = {1, 1, 1};
  std::vector<std::uint32_t> start_;  // CSR over cells
  std::vector<std::uint32_t> order_;
  bool brute_ = true;
};

// For each point of `from`, the squared distance to its nearest point in `to`.
std::vector<double> nearest_distances2(const PointCloud& from, const PointCloud& to);

// mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2
double chamfer_l2(const PointCloud& a, const PointCloud& b);
// 1% of the bounding-box diagonal of the ground truth.
double default_fscore_threshold(const PointCloud& gt);
// Harmonic mean of precision and recall at distance tau (inclusive).
double fscore(const PointCloud& pred, const PointCloud& gt, double tau);
double fscore(const PointCloud& pred, const PointCloud& gt);
// max over partial points of the (unsquared) distance to the completion.
double uhd(const PointCloud& partial, const PointCloud& completion);
// sum_i mean_{j != i} chamfer_l2(c_i, c_j)
double tmd(std::span<const PointCloud> completions);
// mean over reference shapes of the closest generated shape's chamfer_l2
double mmd(std::span<const PointCloud> generated, std::span<const PointCloud> reference);

// For each point of the complete cloud, its largest distance to another point of it.
std::vector<double> farthest_distances(const PointCloud& complete);
// mean over x in B of dist(x, P) / max_{x' in B} |x - x'|
double ambiguity(const PointCloud& complete, const PointCloud& partial);
double ambiguity(const PointCloud& complete, const std::vector<double>& farthest, const PointCloud& partial);

struct ViewRanking {
  std::vector<double> scores;        // per view, input order
  std::vector<std::size_t> order;    // ascending score, ties by index
  std::vector<std::size_t> low;      // first half of `order`
  std::vector<std::size_t> high;     // second half
};

// Ranks precomputed per-view ambiguity scores. Needs at least 2 views.
ViewRanking rank_views(std::vector<double> scores);

struct RankOptions {
  std::size_t complete_points = 4096;
  std::size_t scan_points = 2048;
  geo::ScanOptions scan;
};
// Scans the shape from every viewpoint and ranks the scans by ambiguity.
ViewRanking rank_views(const geo::ImplicitShape& shape, const std::vector<Vec3>& viewpoints, std::uint64_t seed,
                       const RankOptions& options = {});

struct CodebookStats {
  double usage = 0.0;       // fraction of entries with count > 0
  double perplexity = 0.0;  // exp(entropy of the normalized histogram)
};
CodebookStats codebook_stats(std::span<const std::uint64_t> histogram);

}  // namespace vqsf::metrics
