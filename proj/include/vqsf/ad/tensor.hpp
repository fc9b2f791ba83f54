#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace vqsf::ad {

// Element type tag. The numeric values are the on-disk dtype tags.
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

// Global precision flag: new tensors default to this dtype. Training runs in
// f32; gradient checking switches to f64.
DType default_dtype();
void set_default_dtype(DType dtype);

// RAII override of the default dtype.
class PrecisionScope {
 public:
  explicit PrecisionScope(DType dtype) : saved_(default_dtype()) { set_default_dtype(dtype); }
  ~PrecisionScope() { set_default_dtype(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  DType saved_;
};

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

// Invokes fn(T{}) with T = float or double according to `dtype`.
template <class Fn>
decltype(auto) visit_dtype(DType dtype, Fn&& fn) {
  if (dtype == DType::f32) return fn(float{});
  return fn(double{});
}

// Dense row-major n-dimensional array. Value semantics: copies copy the data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = default_dtype());

  static Tensor zeros(Shape shape, DType dtype = default_dtype()) { return Tensor(std::move(shape), dtype); }
  static Tensor full(Shape shape, double value, DType dtype = default_dtype());
  static Tensor from(Shape shape, std::span<const double> values, DType dtype = default_dtype());
  static Tensor scalar(double value, DType dtype = default_dtype()) { return full({}, value, dtype); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return numel_; }
  DType dtype() const { return dtype_; }
  bool empty() const { return numel_ == 0; }

  template <class T>
  std::span<T> span() {
    using U = std::remove_const_t<T>;
    check_type(dtype_of<U>());
    if constexpr (std::is_same_v<U, float>) return f32_;
    else return f64_;
  }
  template <class T>
  std::span<const std::remove_const_t<T>> span() const {
    using U = std::remove_const_t<T>;
    check_type(dtype_of<U>());
    if constexpr (std::is_same_v<U, float>) return f32_;
    else return f64_;
  }

  double get(std::size_t flat) const { return dtype_ == DType::f32 ? f32_[flat] : f64_[flat]; }
  void set(std::size_t flat, double value);
  double item() const;

  std::vector<double> to_vector() const;
  void fill(double value);
  void zero() { fill(0.0); }

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  Tensor cast(DType dtype) const;
  bool all_finite() const;
  // Elementwise this += other (same shape and dtype).
  void add_(const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  void check_type(DType want) const;

  Shape shape_{0};  // default-constructed tensors are empty
  std::size_t numel_ = 0;
  DType dtype_ = DType::f32;
  std::vector<float> f32_;
  std::vector<double> f64_;
};

}  // namespace vqsf::ad
