#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "biov/core/errors.hpp"

namespace biov {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major n-d array. f32 for training, f64 for gradient checking.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    check_dims();
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("tensor", shape_, {data_.size()}, "element count does not match shape");
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same data, new shape with the same element count.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) throw ShapeError("reshape", shape_, shape, "element count differs");
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& other) {
    if (other.shape_ != shape_) throw ShapeError("tensor +=", shape_, other.shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  void check_dims() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("tensor", {}, shape_, "dimensions must be positive");
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Max |a - b| over matching elements.
template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff", a.shape(), b.shape());
  T m{0};
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<T>(std::abs(a[i] - b[i])));
  return m;
}

/// Stack equally-shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
  if (items.empty()) throw InvalidArgument("stack of zero tensors");
  Shape shape = items.front().shape();
  std::vector<T> data;
  data.reserve(items.size() * items.front().size());
  for (const auto& t : items) {
    if (t.shape() != shape) throw ShapeError("stack", shape, t.shape());
    data.insert(data.end(), t.values().begin(), t.values().end());
  }
  shape.insert(shape.begin(), items.size());
  return Tensor<T>(std::move(shape), std::move(data));
}

/// Rows [begin, end) of the leading axis.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin >= end || end > t.dim(0)) throw ShapeError("slice_rows", t.shape(), {begin, end});
  const std::size_t row = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = end - begin;
  std::vector<T> data(t.data() + begin * row, t.data() + end * row);
  return Tensor<T>(std::move(shape), std::move(data));
}

/// Concatenate along the leading axis.
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeError("concat_rows", a.shape(), b.shape());
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<T> data(a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace biov
