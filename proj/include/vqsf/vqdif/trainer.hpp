#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "vqsf/ad/adam.hpp"
#include "vqsf/geo/sampling.hpp"
#include "vqsf/vqdif/model.hpp"

namespace vqsf::vqdif {

// A training shape: dense surface samples (the encoder input is a random
// subset per step) and a pool of labelled occupancy queries.
struct TrainSample {
  geo::PointCloud surface;
  geo::OccupancyTargets targets;
};

struct VqdifTrainOptions {
  std::size_t batch_size = 4;
  std::size_t points_per_cloud = 2048;
  std::size_t queries_per_shape = 2048;
  double lr = 5e-4;
  double lr_final = 5e-5;         // cosine-annealed towards this over decay_steps
  std::uint64_t decay_steps = 0;  // 0 keeps lr constant
  double beta = 0.01;
  std::uint64_t seed = 0;
};

struct StepLosses {
  std::uint64_t step = 0;
  double bce = 0.0;
  double commit = 0.0;
  double total = 0.0;
};

class VqdifTrainer {
 public:
  VqdifTrainer(VqdifModel& model, VqdifTrainOptions options);

  const VqdifTrainOptions& options() const { return options_; }
  std::uint64_t steps() const { return step_; }
  double learning_rate(std::uint64_t step) const;

  // Batch of step `step`: shapes, points and queries drawn from
  // Rng(seed, train, step), so any step can be replayed.
  VqdifBatch make_batch(std::span<const TrainSample> data, std::uint64_t step) const;

  // One Adam step on the batch of the current step, then the EMA codebook
  // update and dead-entry reseeding. Throws DivergenceError on a non-finite loss.
  StepLosses step(std::span<const TrainSample> data);
  StepLosses step(const VqdifBatch& batch);

  // Model tensors plus "vqdif/adam/..." and "vqdif/train/step".
  std::vector<NamedTensor> snapshot() const;
  void load(const std::vector<NamedTensor>& tensors);

 private:
  VqdifModel& model_;
  VqdifTrainOptions options_;
  ad::Adam adam_;
  std::uint64_t step_ = 0;
};

}  // namespace vqsf::vqdif
