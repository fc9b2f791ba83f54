#include "vqsf/vqdif/trainer.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "vqsf/common/error.hpp"

namespace vqsf::vqdif {

VqdifTrainer::VqdifTrainer(VqdifModel& model, VqdifTrainOptions options)
    : model_(model), options_(options), adam_(model.params().params(), ad::AdamOptions{options.lr}) {
  if (options.batch_size == 0 || options.points_per_cloud == 0 || options.queries_per_shape == 0)
    throw UsageError("vqdif training: batch, point and query counts must be positive");
  if (!(options.lr > 0.0) || options.beta < 0.0) throw UsageError("vqdif training: need lr > 0 and beta >= 0");
}

double VqdifTrainer::learning_rate(std::uint64_t step) const {
  if (options_.decay_steps == 0) return options_.lr;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(options_.decay_steps));
  return options_.lr_final + 0.5 * (options_.lr - options_.lr_final) * (1.0 + std::cos(std::numbers::pi * t));
}

VqdifBatch VqdifTrainer::make_batch(std::span<const TrainSample> data, std::uint64_t step) const {
  if (data.empty()) throw DataError("vqdif training: empty dataset");
  Rng rng(options_.seed, Purpose::train, 2 * step);
  const std::size_t B = options_.batch_size, N = options_.points_per_cloud, T = options_.queries_per_shape;
  VqdifBatch batch;
  batch.queries = ad::Tensor({B, T, 3});
  batch.occupancy = ad::Tensor({B, T});
  for (std::size_t b = 0; b < B; ++b) {
    const auto& s = data[static_cast<std::size_t>(rng.below(data.size()))];
    if (s.surface.empty() || s.targets.points.empty()) throw DataError("vqdif training: sample without data");
    geo::PointCloud cloud(N);
    for (auto& p : cloud) p = s.surface[static_cast<std::size_t>(rng.below(s.surface.size()))];
    batch.clouds.push_back(std::move(cloud));
    for (std::size_t t = 0; t < T; ++t) {
      const auto i = static_cast<std::size_t>(rng.below(s.targets.points.size()));
      for (int a = 0; a < 3; ++a) batch.queries.set((b * T + t) * 3 + static_cast<std::size_t>(a), s.targets.points[i][a]);
      batch.occupancy.set(b * T + t, s.targets.occupancy[i]);
    }
  }
  return batch;
}

StepLosses VqdifTrainer::step(std::span<const TrainSample> data) { return step(make_batch(data, step_)); }

StepLosses VqdifTrainer::step(const VqdifBatch& batch) {
  auto terms = model_.loss(batch, options_.beta);
  StepLosses out{step_, terms.bce.item(), terms.commit.item(), terms.total.item()};
  if (!std::isfinite(out.total)) {
    std::ostringstream msg;
    msg << "vqdif training diverged at step " << step_ << ": bce=" << out.bce << " commit=" << out.commit;
    throw DivergenceError(msg.str());
  }
  terms.total.backward();
  adam_.set_lr(learning_rate(step_));
  adam_.step();
  model_.codebook().ema_update(terms.z, terms.codes);
  Rng rng(options_.seed, Purpose::train, 2 * step_ + 1);
  model_.codebook().reseed_dead(terms.z, rng);
  ++step_;
  return out;
}

std::vector<NamedTensor> VqdifTrainer::snapshot() const {
  auto out = model_.snapshot();
  for (auto& t : adam_.state("vqdif/adam/")) out.push_back(std::move(t));
  out.push_back({"vqdif/train/step", ad::Tensor::scalar(static_cast<double>(step_), ad::DType::f64)});
  return out;
}

void VqdifTrainer::load(const std::vector<NamedTensor>& tensors) {
  model_.load(tensors);
  adam_.load_state(tensors, "vqdif/adam/");
  step_ = static_cast<std::uint64_t>(find_tensor(tensors, "vqdif/train/step").item());
}

}  // namespace vqsf::vqdif
