#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vqsf/ad/ops.hpp"
#include "vqsf/common/checkpoint.hpp"
#include "vqsf/common/rng.hpp"

namespace vqsf::ad {

// Ordered, named collection of trainable leaves.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Var> params() const;
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::size_t element_count() const;
  void zero_grad();

  // Tensors named prefix + name, in registration order.
  std::vector<NamedTensor> snapshot(const std::string& prefix) const;
  // Overwrites every parameter from `tensors`; shapes must match exactly.
  void load(const std::vector<NamedTensor>& tensors, const std::string& prefix);

 private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// U(-bound, bound) with bound = gain * sqrt(3 / fan_in), i.e. variance gain^2 / fan_in.
Tensor uniform_init(Shape shape, std::size_t fan_in, double gain, Rng& rng);

struct Linear {
  Var weight;  // [in, out]
  Var bias;    // [out]

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         double gain = 1.4142135623730951);
  Var operator()(const Var& x) const { return add(matmul(x, weight), bias); }
};

struct Conv3d {
  Var weight;  // [k, k, k, in, out]
  Var bias;    // [out]
  Conv3dOptions options;

  Conv3d() = default;
  Conv3d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
         Conv3dOptions options, Rng& rng, double gain = 1.4142135623730951);
  Var operator()(const Var& x) const { return conv3d(x, weight, bias, options); }
};

struct LayerNorm {
  Var gamma;
  Var beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, std::size_t dim);
  Var operator()(const Var& x) const { return layer_norm(x, gamma, beta); }
};

}  // namespace vqsf::ad
