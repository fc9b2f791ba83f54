#include "vqsf/ad/adam.hpp"

#include <cmath>

#include "vqsf/common/error.hpp"

namespace vqsf::ad {

Adam::Adam(std::vector<Var> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape(), DType::f64);
    v_.emplace_back(p.shape(), DType::f64);
  }
}

void Adam::step() {
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (p.has_grad() && p.grad().shape() != p.shape())
      throw DataError("adam: gradient shape " + to_string(p.grad().shape()) + " for parameter " + to_string(p.shape()));
    if (m_[i].shape() != p.shape())
      throw DataError("adam: state shape " + to_string(m_[i].shape()) + " for parameter " + to_string(p.shape()));
    auto m = m_[i].span<double>();
    auto v = v_[i].span<double>();
    const bool has = p.has_grad();
    visit_dtype(p.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto w = p.mutable_value().span<T>();
      std::span<const T> g;
      if (has) g = p.grad().span<const T>();
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = has ? static_cast<double>(g[k]) : 0.0;
        m[k] = b1 * m[k] + (1.0 - b1) * gk;
        v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        w[k] = static_cast<T>(w[k] - options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
      }
    });
    p.zero_grad();
  }
}

std::vector<NamedTensor> Adam::state(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  out.push_back({prefix + "step", Tensor::scalar(static_cast<double>(step_), DType::f64)});
  for (std::size_t i = 0; i < m_.size(); ++i) {
    out.push_back({prefix + "m/" + std::to_string(i), m_[i]});
    out.push_back({prefix + "v/" + std::to_string(i), v_[i]});
  }
  return out;
}

void Adam::load_state(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  step_ = static_cast<std::uint64_t>(find_tensor(tensors, prefix + "step").item());
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const Tensor& m = find_tensor(tensors, prefix + "m/" + std::to_string(i));
    const Tensor& v = find_tensor(tensors, prefix + "v/" + std::to_string(i));
    if (m.shape() != m_[i].shape() || v.shape() != v_[i].shape())
      throw DataError("adam state '" + prefix + std::to_string(i) + "' does not match parameter shape " +
                      to_string(m_[i].shape()));
    m_[i] = m.cast(DType::f64);
    v_[i] = v.cast(DType::f64);
  }
}

}  // namespace vqsf::ad
