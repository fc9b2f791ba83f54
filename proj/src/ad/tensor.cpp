#include "vqsf/ad/tensor.hpp"

#include <cmath>
#include <sstream>

#include "vqsf/common/error.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace vqsf::ad {
namespace {

#if defined(__GLIBC__)
// Training frees and reallocates the same multi-megabyte buffers every step.
// Serving them from the heap instead of fresh mmaps avoids a page-fault storm.
[[maybe_unused]] const bool g_malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  return true;
}();
#endif

thread_local DType g_default_dtype = DType::f32;

}  // namespace

DType default_dtype() { return g_default_dtype; }
void set_default_dtype(DType dtype) { g_default_dtype = dtype; }

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), numel_(ad::numel(shape_)), dtype_(dtype) {
  if (dtype_ == DType::f32) f32_.assign(numel_, 0.0f);
  else f64_.assign(numel_, 0.0);
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  t.fill(value);
  return t;
}

Tensor Tensor::from(Shape shape, std::span<const double> values, DType dtype) {
  Tensor t(std::move(shape), dtype);
  if (values.size() != t.numel_)
    throw DataError("Tensor::from: " + std::to_string(values.size()) + " values for shape " + to_string(t.shape_));
  for (std::size_t i = 0; i < values.size(); ++i) t.set(i, values[i]);
  return t;
}

void Tensor::set(std::size_t flat, double value) {
  if (dtype_ == DType::f32) f32_[flat] = static_cast<float>(value);
  else f64_[flat] = value;
}

double Tensor::item() const {
  if (numel_ != 1) throw DataError("item() on tensor of shape " + to_string(shape_));
  return get(0);
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(numel_);
  for (std::size_t i = 0; i < numel_; ++i) out[i] = get(i);
  return out;
}

void Tensor::fill(double value) {
  if (dtype_ == DType::f32) std::fill(f32_.begin(), f32_.end(), static_cast<float>(value));
  else std::fill(f64_.begin(), f64_.end(), value);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (ad::numel(shape) != numel_)
    throw DataError("reshape: cannot view " + to_string(shape_) + " as " + to_string(shape));
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::cast(DType dtype) const {
  if (dtype == dtype_) return *this;
  Tensor t(shape_, dtype);
  for (std::size_t i = 0; i < numel_; ++i) t.set(i, get(i));
  return t;
}

bool Tensor::all_finite() const {
  return visit_dtype(dtype_, [&](auto zero) {
    using T = decltype(zero);
    for (T v : span<T>())
      if (!std::isfinite(v)) return false;
    return true;
  });
}

void Tensor::add_(const Tensor& other) {
  if (other.shape_ != shape_ || other.dtype_ != dtype_)
    throw DataError("add_: shape " + to_string(other.shape_) + " into " + to_string(shape_));
  visit_dtype(dtype_, [&](auto zero) {
    using T = decltype(zero);
    auto dst = span<T>();
    auto src = other.span<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape_ == b.shape_ && a.dtype_ == b.dtype_ && a.f32_ == b.f32_ && a.f64_ == b.f64_;
}

void Tensor::check_type(DType want) const {
  if (want != dtype_) throw DataError("tensor dtype mismatch");
}

}  // namespace vqsf::ad
