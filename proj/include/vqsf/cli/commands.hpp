#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "vqsf/cli/config.hpp"
#include "vqsf/cli/dataset.hpp"

namespace vqsf::cli {

// Implementations behind the `vqsf` subcommands. Each takes a resolved
// config, reports progress on `log`, and throws vqsf::Error subclasses whose
// code() is the process exit status.

std::filesystem::path default_vqdif_checkpoint(const RunConfig& config);
std::filesystem::path default_shapeformer_checkpoint(const RunConfig& config);

Manifest cmd_gen_data(const RunConfig& config, std::ostream& log);

struct TrainRequest {
  bool resume = false;
  std::filesystem::path checkpoint;        // empty = default location
  std::filesystem::path vqdif_checkpoint;  // shapeformer only; empty = default
};

// Trains to vqdif.steps, checkpointing every vqdif.checkpoint_every steps.
// Appends step,bce,commit,total rows to logs/vqdif_loss.csv; on resume the
// log is cut back to the checkpoint's step first. Returns the last losses.
vqdif::StepLosses cmd_train_vqdif(const RunConfig& config, const TrainRequest& request, std::ostream& log);

// Pairs every train scan's sequence with the shape's full-surface sequence,
// dropping pairs longer than sf.max_seq_len. Log: logs/shapeformer_loss.csv
// with columns step,nll. Returns the last loss.
double cmd_train_shapeformer(const RunConfig& config, const TrainRequest& request, std::ostream& log);

vqdif::SparseSeq cmd_encode(const RunConfig& config, const std::filesystem::path& vqdif_checkpoint,
                            const std::filesystem::path& cloud, const std::filesystem::path& output, std::ostream& log);

struct CompleteRequest {
  std::filesystem::path scan;    // single-scan mode
  std::string split;             // batch mode over a dataset split, e.g. "test"
  std::filesystem::path output;  // default: <run_dir>/samples[/<scan stem>]
  std::filesystem::path vqdif_checkpoint, shapeformer_checkpoint;
};

struct CompletionTiming {
  std::filesystem::path mesh;
  double seconds = 0.0;
  std::size_t tuples = 0;
  bool ended = true;
};

// Writes sample_<k>.obj and sample_<k>.vqsq for k < sample.num_samples. In
// split mode, for each shape and each selected view (eval.views_per_group
// most and least ambiguous), under <output>/<shape>/view_<v>/.
std::vector<CompletionTiming> cmd_complete(const RunConfig& config, const CompleteRequest& request, std::ostream& log);

geo::Mesh cmd_reconstruct(const RunConfig& config, const std::filesystem::path& vqdif_checkpoint,
                          const std::filesystem::path& sequence, const std::filesystem::path& output, std::ostream& log);

struct EvalRow {
  std::string shape, kind;
  std::size_t view = 0;
  bool high = false;
  std::size_t sample = 0;
  double ambiguity = 0, cd = 0, f1 = 0, uhd = 0;
  bool valid = true;  // false for an empty completion mesh
};

struct EvalGroup {
  std::string name;  // "high", "low", "all"
  std::size_t rows = 0, failed = 0;
  double cd = 0, f1 = 0, uhd = 0, ambiguity = 0, tmd = 0, mmd = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<EvalGroup> groups;
};

// Walks <completions>/<shape>/view_<v>/sample_<k>.{obj,xyz} for every test
// shape of the dataset. Meshes are resampled to eval.points; .xyz files are
// used as they are. Writes <run_dir>/eval/metrics.csv and summary.csv.
EvalReport cmd_eval(const RunConfig& config, const std::filesystem::path& dataset,
                    const std::filesystem::path& completions, std::ostream& log);

// Runs every autodiff op's finite-difference check; prints per-op worst
// errors and returns whether all passed.
bool cmd_grad_check(std::size_t cases, std::uint64_t seed, std::ostream& log);

}  // namespace vqsf::cli
