#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vqsf/geo/sampling.hpp"
#include "vqsf/geo/shape.hpp"
#include "vqsf/sf/model.hpp"
#include "vqsf/vqdif/model.hpp"
#include "vqsf/vqdif/trainer.hpp"

namespace vqsf::cli {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// Flat `key = value` document. Lines starting with '#' and blank lines are
// ignored. Every key has a type and a range; unknown keys, duplicates and
// out-of-range values are UsageErrors. Defaults are the desk-scale presets.
class RunConfig {
 public:
  RunConfig();

  // Defaults overlaid with the file. The file must declare
  // `schema_version = 1`.
  static RunConfig from_file(const std::filesystem::path& path);
  void merge_text(const std::string& text, const std::string& origin);

  // Parses, range-checks and stores one value.
  void set(const std::string& key, const std::string& value);
  // "key=value" strings, as given to --set.
  void apply_overrides(std::span<const std::string> assignments);

  const std::string& get(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t size(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }
  double real(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;

  // Cross-key checks (power-of-two grids, head divisibility, ...).
  void validate() const;
  // Every key with its resolved value, in schema order.
  std::string resolved() const;

  static const std::vector<std::string>& keys();

  // Typed views.
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }
  std::filesystem::path run_dir() const { return get("run_dir"); }
  std::filesystem::path data_dir() const;
  std::vector<geo::ShapeKind> shape_kinds() const;
  geo::ScanOptions scan_options() const;
  geo::TargetOptions target_options() const;
  vqdif::VqdifConfig vqdif() const;
  vqdif::VqdifTrainOptions vqdif_train() const;
  sf::TransformerConfig transformer() const;
  sf::SfTrainOptions sf_train() const;
  sf::SampleOptions sampling() const;

 private:
  std::map<std::string, std::string> values_;
};

// Creates the run directory tree (checkpoints/, logs/, samples/, eval/) and
// writes config.resolved plus VERSION.
void prepare_run_dir(const RunConfig& config);

}  // namespace vqsf::cli
