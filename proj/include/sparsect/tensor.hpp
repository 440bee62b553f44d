#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sparsect/error.hpp"
#include "sparsect/half.hpp"

namespace sparsect {

enum class DType : std::uint8_t { FP32 = 1, FP16E = 2, U8 = 3 };

inline const char* to_string(DType d) {
  switch (d) {
    case DType::FP32: return "fp32";
    case DType::FP16E: return "fp16";
    case DType::U8: return "u8";
  }
  return "?";
}

/// Up to four extents. Images use (batch, channel, height, width).
class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims) {
    if (dims.size() > kMaxRank) throw DimensionError("rank exceeds 4");
    for (auto d : dims) {
      if (d < 0) throw DimensionError("negative extent");
      dims_[rank_++] = d;
    }
  }
  template <class It>
  Shape(It first, It last) {
    for (; first != last; ++first) {
      if (rank_ == kMaxRank) throw DimensionError("rank exceeds 4");
      if (*first < 0) throw DimensionError("negative extent");
      dims_[rank_++] = static_cast<std::int64_t>(*first);
    }
  }

  int rank() const noexcept { return rank_; }
  std::int64_t operator[](int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const noexcept {
    std::size_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(dims_[i]);
    return n;
  }

  // NCHW accessors; only meaningful for rank-4 shapes.
  std::int64_t n() const { return at4(0); }
  std::int64_t c() const { return at4(1); }
  std::int64_t h() const { return at4(2); }
  std::int64_t w() const { return at4(3); }

  std::vector<std::int64_t> dims() const { return {dims_.begin(), dims_.begin() + rank_}; }

  friend bool operator==(const Shape& a, const Shape& b) noexcept {
    if (a.rank_ != b.rank_) return false;
    for (int i = 0; i < a.rank_; ++i)
      if (a.dims_[i] != b.dims_[i]) return false;
    return true;
  }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < rank_; ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + ")";
  }

 private:
  std::int64_t at4(int i) const {
    if (rank_ != 4) throw DimensionError("expected rank-4 tensor, got " + str());
    return dims_[i];
  }

  std::array<std::int64_t, kMaxRank> dims_{};
  int rank_ = 0;
};

/// Dense row-major tensor. `T` is the storage scalar (float in production,
/// double for gradient checking); `dtype` records the numeric class the
/// values conform to.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::FP32)
      : shape_(shape), dtype_(dtype), data_(shape.numel(), T(0)) {}
  Tensor(Shape shape, std::vector<T> data, DType dtype = DType::FP32)
      : shape_(shape), dtype_(dtype), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
      throw DimensionError("payload length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_.str());
  }

  static Tensor filled(Shape shape, T value) {
    Tensor t(shape);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  DType dtype() const noexcept { return dtype_; }
  void set_dtype(DType d) noexcept { dtype_ = d; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return data_[offset(n, c, y, x)];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data_[offset(n, c, y, x)];
  }

  Tensor reshaped(Shape s) const {
    if (s.numel() != size()) throw DimensionError("reshape " + shape_.str() + " -> " + s.str());
    return Tensor(s, data_, dtype_);
  }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()), dtype_);
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) noexcept {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>(((n * shape_.c() + c) * shape_.h() + y) * shape_.w() + x);
  }

  Shape shape_;
  DType dtype_ = DType::FP32;
  std::vector<T> data_;
};

/// Rounds every element to binary16 and tags the result FP16E.
template <class T>
Tensor<T> to_half(Tensor<T> t) {
  half::quantize_inplace(t.data());
  t.set_dtype(DType::FP16E);
  return t;
}

template <class T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) throw DimensionError("dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

}  // namespace sparsect
