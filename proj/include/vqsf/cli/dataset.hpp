#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vqsf/cli/config.hpp"
#include "vqsf/geo/sampling.hpp"
#include "vqsf/geo/shape.hpp"
#include "vqsf/sf/model.hpp"
#include "vqsf/vqdif/model.hpp"
#include "vqsf/vqdif/trainer.hpp"

namespace vqsf::cli {

enum class Split { train, val, test };
std::string to_string(Split s);
Split parse_split(const std::string& name);

// Shape seeds come from disjoint ranges: train seed*2^32 + i, val + 1e6,
// test + 2e6 (at most 999999 shapes per split).
std::uint64_t shape_seed(std::uint64_t master_seed, Split split, std::size_t index);

struct ShapeRecord {
  Split split = Split::train;
  std::string id;  // e.g. "train_0007"
  geo::ShapeKind kind = geo::ShapeKind::sphere;
  std::uint64_t seed = 0;
  std::vector<double> params;  // size params + center + euler

  geo::ImplicitShape shape() const;
};

// One scan of one shape. Views of a shape are ranked by ambiguity; the upper
// half forms the "high" group.
struct ViewRecord {
  std::string shape_id;
  std::size_t index = 0;
  geo::Vec3 direction;
  double ambiguity = 0.0;
  bool high = false;
};

// Human-readable dataset index:
//   format = 1
//   seed = <master seed>
//   counts = <train> <val> <test>
//   shape split=train id=train_0000 kind=box seed=... params=a,b,...
//   view shape=test_0000 index=3 dir=x,y,z ambiguity=... group=high
struct Manifest {
  std::uint64_t seed = 0;
  std::size_t counts[3] = {0, 0, 0};
  std::vector<ShapeRecord> shapes;
  std::vector<ViewRecord> views;

  std::vector<const ShapeRecord*> split(Split s) const;
  std::vector<const ViewRecord*> views_of(const std::string& shape_id) const;
  const ShapeRecord& shape(const std::string& id) const;  // DataError when absent

  std::string text() const;
  static Manifest parse(const std::string& text, const std::string& origin);
};

Manifest read_manifest(const std::filesystem::path& data_dir);

// Per-shape files under <data_dir>/<split>/<id>/.
std::filesystem::path shape_dir(const std::filesystem::path& data_dir, const ShapeRecord& rec);
std::filesystem::path surface_path(const std::filesystem::path& data_dir, const ShapeRecord& rec);
std::filesystem::path targets_path(const std::filesystem::path& data_dir, const ShapeRecord& rec);
std::filesystem::path scan_path(const std::filesystem::path& data_dir, const ShapeRecord& rec, std::size_t view);

// Occupancy targets, little-endian:
//   "VQOT" | u16 version | u64 T | T x (f32 x, f32 y, f32 z) | T x u8 occupancy
void write_targets(const std::filesystem::path& path, const geo::OccupancyTargets& targets);
geo::OccupancyTargets read_targets(const std::filesystem::path& path);

// Builds every shape, surface sample, target set and scan of the recipe and
// writes them with the manifest. Deterministic for the config.
Manifest generate_dataset(const RunConfig& config, const std::function<void(const std::string&)>& log = {});

std::vector<vqdif::TrainSample> load_vqdif_samples(const std::filesystem::path& data_dir, const Manifest& manifest,
                                                   Split split);

// The k most and k least ambiguous views of a shape (high group first).
std::vector<const ViewRecord*> select_views(const Manifest& manifest, const std::string& shape_id, std::size_t k);

}  // namespace vqsf::cli
