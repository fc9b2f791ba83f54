#include "vqsf/vqdif/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vqsf/common/error.hpp"

namespace vqsf::vqdif {

namespace {

void check_rows(const ad::Tensor& z, std::size_t D, const char* op) {
  if (z.rank() != 2 || z.dim(1) != D)
    throw DataError(std::string(op) + ": expected [K, " + std::to_string(D) + "] features, got " +
                    ad::to_string(z.shape()));
}

}  // namespace

Codebook::Codebook(std::size_t V, std::size_t D, CodebookOptions options)
    : V_(V), D_(D), options_(options), e_(V * D, 0.0), N_(V, 0.0), m_(V * D, 0.0), idle_(V, 0) {
  if (V == 0 || D == 0) throw UsageError("codebook: V and D must be positive");
  if (!(options.decay >= 0.0 && options.decay <= 1.0)) throw UsageError("codebook: decay must lie in [0, 1]");
  if (!(options.epsilon > 0.0)) throw UsageError("codebook: epsilon must be positive");
}

void Codebook::set_row(std::size_t j, std::span<const double> value) {
  std::copy(value.begin(), value.end(), e_.begin() + static_cast<std::ptrdiff_t>(j * D_));
  std::copy(value.begin(), value.end(), m_.begin() + static_cast<std::ptrdiff_t>(j * D_));
  N_[j] = 1.0;
  idle_[j] = 0;
}

void Codebook::set_embeddings(std::vector<double> e) {
  if (e.size() != V_ * D_) throw DataError("codebook: embedding table has the wrong size");
  for (std::size_t j = 0; j < V_; ++j) set_row(j, {e.data() + j * D_, D_});
  initialized_ = true;
}

std::uint32_t Codebook::quantize(std::span<const double> z) const {
  if (z.size() != D_) throw DataError("quantize: feature has dimension " + std::to_string(z.size()));
  for (double x : z)
    if (!std::isfinite(x)) throw DataError("quantize: non-finite feature");
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t arg = 0;
  for (std::size_t j = 0; j < V_; ++j) {
    const double* e = e_.data() + j * D_;
    double d = 0.0;
    for (std::size_t k = 0; k < D_; ++k) {
      const double t = z[k] - e[k];
      d += t * t;
    }
    if (d < best) {
      best = d;
      arg = static_cast<std::uint32_t>(j);
    }
  }
  return arg;
}

std::vector<std::uint32_t> Codebook::quantize_rows(const ad::Tensor& z) const {
  check_rows(z, D_, "quantize");
  const std::size_t K = z.dim(0);
  std::vector<std::uint32_t> out(K);
  std::vector<double> row(D_);
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t k = 0; k < D_; ++k) row[k] = z.get(i * D_ + k);
    out[i] = quantize(row);
  }
  return out;
}

ad::Tensor Codebook::lookup(std::span<const std::uint32_t> codes, ad::DType dtype) const {
  ad::Tensor out({codes.size(), D_}, dtype);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] >= V_) throw DataError("codebook lookup: code " + std::to_string(codes[i]) + " out of range");
    for (std::size_t k = 0; k < D_; ++k) out.set(i * D_ + k, e_[codes[i] * D_ + k]);
  }
  return out;
}

void Codebook::data_init(const ad::Tensor& z, Rng& rng) {
  check_rows(z, D_, "codebook init");
  if (z.dim(0) == 0) throw DataError("codebook init: no features");
  std::vector<double> row(D_);
  for (std::size_t j = 0; j < V_; ++j) {
    const auto i = static_cast<std::size_t>(rng.below(z.dim(0)));
    for (std::size_t k = 0; k < D_; ++k) row[k] = z.get(i * D_ + k);
    set_row(j, row);
  }
  initialized_ = true;
}

std::vector<std::uint64_t> Codebook::ema_update(const ad::Tensor& z, std::span<const std::uint32_t> codes) {
  check_rows(z, D_, "ema update");
  if (codes.size() != z.dim(0)) throw DataError("ema update: one code per feature row required");
  std::vector<std::uint64_t> count(V_, 0);
  std::vector<double> sum(V_ * D_, 0.0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::uint32_t j = codes[i];
    if (j >= V_) throw DataError("ema update: code out of range");
    ++count[j];
    for (std::size_t k = 0; k < D_; ++k) sum[j * D_ + k] += z.get(i * D_ + k);
  }
  const double g = options_.decay;
  for (std::size_t j = 0; j < V_; ++j) {
    N_[j] = g * N_[j] + (1.0 - g) * static_cast<double>(count[j]);
    const double denom = std::max(N_[j], options_.epsilon);
    for (std::size_t k = 0; k < D_; ++k) {
      double& m = m_[j * D_ + k];
      m = g * m + (1.0 - g) * sum[j * D_ + k];
      e_[j * D_ + k] = m / denom;
    }
    idle_[j] = count[j] ? 0 : idle_[j] + 1;
  }
  initialized_ = true;
  return count;
}

std::size_t Codebook::reseed_dead(const ad::Tensor& z, Rng& rng) {
  if (options_.dead_after == 0 || z.dim(0) == 0) return 0;
  check_rows(z, D_, "codebook reseed");
  std::size_t n = 0;
  std::vector<double> row(D_);
  for (std::size_t j = 0; j < V_; ++j) {
    if (idle_[j] < options_.dead_after) continue;
    const auto i = static_cast<std::size_t>(rng.below(z.dim(0)));
    for (std::size_t k = 0; k < D_; ++k) row[k] = z.get(i * D_ + k);
    set_row(j, row);
    ++n;
  }
  return n;
}

std::vector<NamedTensor> Codebook::snapshot(const std::string& prefix) const {
  using ad::DType;
  using ad::Tensor;
  std::vector<double> idle(idle_.begin(), idle_.end());
  return {
      {prefix + "e", Tensor::from({V_, D_}, e_, DType::f64)},
      {prefix + "N", Tensor::from({V_}, N_, DType::f64)},
      {prefix + "m", Tensor::from({V_, D_}, m_, DType::f64)},
      {prefix + "idle", Tensor::from({V_}, idle, DType::f64)},
      {prefix + "initialized", Tensor::scalar(initialized_ ? 1.0 : 0.0, DType::f64)},
  };
}

void Codebook::load(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  const auto& e = find_tensor(tensors, prefix + "e");
  const auto& N = find_tensor(tensors, prefix + "N");
  const auto& m = find_tensor(tensors, prefix + "m");
  if (e.shape() != ad::Shape{V_, D_} || m.shape() != ad::Shape{V_, D_} || N.shape() != ad::Shape{V_})
    throw DataError("codebook checkpoint has shape " + ad::to_string(e.shape()) + ", model expects [" +
                    std::to_string(V_) + "," + std::to_string(D_) + "]");
  e_ = e.to_vector();
  N_ = N.to_vector();
  m_ = m.to_vector();
  if (has_tensor(tensors, prefix + "idle")) {
    const auto idle = find_tensor(tensors, prefix + "idle").to_vector();
    if (idle.size() != V_) throw DataError("codebook idle counters have the wrong size");
    for (std::size_t j = 0; j < V_; ++j) idle_[j] = static_cast<std::uint32_t>(idle[j]);
  } else {
    std::fill(idle_.begin(), idle_.end(), 0u);
  }
  initialized_ = !has_tensor(tensors, prefix + "initialized") ||
                 find_tensor(tensors, prefix + "initialized").item() != 0.0;
}

}  // namespace vqsf::vqdif
