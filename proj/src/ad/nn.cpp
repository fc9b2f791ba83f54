#include "vqsf/ad/nn.hpp"

#include <cmath>

#include "vqsf/common/error.hpp"

namespace vqsf::ad {

Var ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw DataError("duplicate parameter '" + name + "'");
  Var v(std::move(init), true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, v);
  return v;
}

Var ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

std::vector<Var> ParamStore::params() const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& [name, v] : entries_) out.push_back(v);
  return out;
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += v.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

std::vector<NamedTensor> ParamStore::snapshot(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  out.reserve(entries_.size());
  for (const auto& [name, v] : entries_) out.push_back({prefix + name, v.value()});
  return out;
}

void ParamStore::load(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  for (auto& [name, v] : entries_) {
    const Tensor& t = find_tensor(tensors, prefix + name);
    if (t.shape() != v.shape())
      throw DataError("parameter '" + prefix + name + "' has shape " + to_string(t.shape()) + " in checkpoint, model expects " +
                      to_string(v.shape()));
    v.mutable_value() = t.cast(v.dtype());
  }
}

Tensor uniform_init(Shape shape, std::size_t fan_in, double gain, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-bound, bound));
  return t;
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng, double gain)
    : weight(store.add(name + ".weight", uniform_init({in, out}, in, gain, rng))),
      bias(store.add(name + ".bias", Tensor::zeros({out}))) {}

Conv3d::Conv3d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
               Conv3dOptions opts, Rng& rng, double gain)
    : weight(store.add(name + ".weight",
                       uniform_init({kernel, kernel, kernel, in, out}, kernel * kernel * kernel * in, gain, rng))),
      bias(store.add(name + ".bias", Tensor::zeros({out}))),
      options(opts) {}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t dim)
    : gamma(store.add(name + ".gamma", Tensor::full({dim}, 1.0))), beta(store.add(name + ".beta", Tensor::zeros({dim}))) {}

}  // namespace vqsf::ad
