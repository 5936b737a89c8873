#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sfnet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Row-major strides for a contiguous tensor of the given shape.
std::vector<std::size_t> row_major_strides(const Shape& shape);

/// Dense row-major array of real scalars.
///
/// Feature maps use the batch-major layout [N, C, W, H, D]; token matrices
/// use [N, L, D_embed]. Every extent is at least one.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_numel(shape_)) {
      throw std::invalid_argument("tensor buffer holds " + std::to_string(data_.size()) +
                                  " values but shape " + shape_str(shape_) + " needs " +
                                  std::to_string(shape_numel(shape_)));
    }
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& buffer() { return data_; }
  const std::vector<T>& buffer() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Element access for 5-D feature maps [N, C, W, H, D].
  T& at(std::size_t n, std::size_t c, std::size_t x, std::size_t y, std::size_t z) {
    return data_[offset5(n, c, x, y, z)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t x, std::size_t y, std::size_t z) const {
    return data_[offset5(n, c, x, y, z)];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " +
                                  shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw std::invalid_argument("tensor extents must be >= 1, got " + shape_str(shape_));
    }
  }

  std::size_t offset5(std::size_t n, std::size_t c, std::size_t x, std::size_t y,
                      std::size_t z) const {
    return (((n * shape_[1] + c) * shape_[2] + x) * shape_[3] + y) * shape_[4] + z;
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Spatial voxel count W*H*D of a 5-D feature map.
template <typename T>
std::size_t spatial_size(const Tensor<T>& t) {
  return t.dim(2) * t.dim(3) * t.dim(4);
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  T m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace sfnet
