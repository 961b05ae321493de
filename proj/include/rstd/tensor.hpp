#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rstd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TensorError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_product(std::span<const std::size_t> shape);
std::string shape_to_string(std::span<const std::size_t> shape);

/**
 * Dense N-dimensional array in row-major order.
 *
 * The element count always equals the product of the shape and every mode
 * has dimension >= 1. A tensor of order one with shape [1] stands in for a
 * scalar (contracting away every mode yields that shape).
 */
template <typename T>
class DenseTensor {
 public:
  using value_type = T;

  DenseTensor() : shape_{1}, data_(1, T{0}) {}
  DenseTensor(Shape shape, std::vector<T> data);

  static DenseTensor zeros(Shape shape);
  static DenseTensor filled(Shape shape, T value);

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }

  std::span<const T> data() const { return data_; }
  std::span<T> mutable_data() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T operator[](std::size_t flat) const { return data_[flat]; }
  T& operator[](std::size_t flat) { return data_[flat]; }

  /// Element access by multi-index; bounds are checked.
  T at(std::span<const std::size_t> index) const;
  T at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }
  std::size_t flat_index(std::span<const std::size_t> index) const;

  /// Same values, new shape with equal element count.
  DenseTensor reshaped(Shape shape) const;

  DenseTensor& operator*=(T alpha);
  DenseTensor& operator+=(const DenseTensor& other);

  template <typename U>
  DenseTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return DenseTensor<U>(shape_, std::move(out));
  }

  bool operator==(const DenseTensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
DenseTensor<T> operator*(T alpha, DenseTensor<T> t) {
  t *= alpha;
  return t;
}

/// Row-major strides of a shape.
Shape row_major_strides(std::span<const std::size_t> shape);

/// Output mode k takes input mode perm[k].
template <typename T>
DenseTensor<T> permute_modes(const DenseTensor<T>& t, std::span<const std::size_t> perm);

/// Inverse of a mode permutation; throws on a non-bijective input.
std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm);

/**
 * Sums over matched index pairs (modes_a[k], modes_b[k]).
 *
 * Output modes are the free modes of `a` in order followed by the free modes
 * of `b`. When nothing is left free the result has shape [1].
 */
template <typename T>
DenseTensor<T> contract(const DenseTensor<T>& a, const DenseTensor<T>& b,
                        std::span<const std::size_t> modes_a,
                        std::span<const std::size_t> modes_b);

template <typename T>
T max_abs_diff(const DenseTensor<T>& a, const DenseTensor<T>& b);

template <typename T>
T max_abs(const DenseTensor<T>& a);

}  // namespace rstd
