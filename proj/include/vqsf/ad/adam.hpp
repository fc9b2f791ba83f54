#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqsf/ad/var.hpp"
#include "vqsf/common/checkpoint.hpp"

namespace vqsf::ad {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are kept in f64 regardless of the
// parameter dtype.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamOptions options);

  // Applies one update from the parameters' current gradients (a parameter
  // with no gradient is treated as having a zero gradient), then zeroes them.
  void step();

  void set_lr(double lr) { options_.lr = lr; }
  const AdamOptions& options() const { return options_; }
  std::uint64_t steps() const { return step_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

  std::vector<NamedTensor> state(const std::string& prefix) const;
  void load_state(const std::vector<NamedTensor>& tensors, const std::string& prefix);

 private:
  std::vector<Var> params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
};

}  // namespace vqsf::ad
