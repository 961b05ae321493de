#include "rstd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gemm.hpp"

namespace rstd {

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Shape row_major_strides(std::span<const std::size_t> shape) {
  Shape strides(shape.size(), 1);
  for (std::size_t k = shape.size(); k-- > 1;) strides[k - 1] = strides[k] * shape[k];
  return strides;
}

template <typename T>
DenseTensor<T>::DenseTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw TensorError("tensor order must be >= 1");
  for (auto d : shape_) {
    if (d == 0) throw TensorError("tensor dimension 0 in shape " + shape_to_string(shape_));
  }
  const auto expected = shape_product(shape_);
  if (expected != data_.size()) {
    throw TensorError("data length " + std::to_string(data_.size()) + " does not match shape " +
                      shape_to_string(shape_) + " (expects " + std::to_string(expected) + ")");
  }
}

template <typename T>
DenseTensor<T> DenseTensor<T>::zeros(Shape shape) {
  return filled(std::move(shape), T{0});
}

template <typename T>
DenseTensor<T> DenseTensor<T>::filled(Shape shape, T value) {
  const auto n = shape_product(shape);
  return DenseTensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
std::size_t DenseTensor<T>::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw TensorError("index of order " + std::to_string(index.size()) + " for tensor of shape " +
                      shape_to_string(shape_));
  }
  std::size_t flat = 0;
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= shape_[k]) throw TensorError("index out of range in mode " + std::to_string(k));
    flat = flat * shape_[k] + index[k];
  }
  return flat;
}

template <typename T>
T DenseTensor<T>::at(std::span<const std::size_t> index) const {
  return data_[flat_index(index)];
}

template <typename T>
DenseTensor<T> DenseTensor<T>::reshaped(Shape shape) const {
  return DenseTensor(std::move(shape), data_);
}

template <typename T>
DenseTensor<T>& DenseTensor<T>::operator*=(T alpha) {
  for (auto& v : data_) v *= alpha;
  return *this;
}

template <typename T>
DenseTensor<T>& DenseTensor<T>::operator+=(const DenseTensor& other) {
  if (other.shape_ != shape_) {
    throw TensorError("shape mismatch in +=: " + shape_to_string(shape_) + " vs " +
                      shape_to_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size(), perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    if (perm[k] >= perm.size() || inv[perm[k]] != perm.size()) {
      throw TensorError("mode permutation is not a bijection on {0.." +
                        std::to_string(perm.size()) + "}");
    }
    inv[perm[k]] = k;
  }
  return inv;
}

template <typename T>
DenseTensor<T> permute_modes(const DenseTensor<T>& t, std::span<const std::size_t> perm) {
  if (perm.size() != t.order()) {
    throw TensorError("mode permutation of length " + std::to_string(perm.size()) +
                      " for tensor of order " + std::to_string(t.order()));
  }
  (void)inverse_permutation(perm);
  if (std::is_sorted(perm.begin(), perm.end())) return t;

  const auto& in_shape = t.shape();
  const auto in_strides = row_major_strides(in_shape);
  const std::size_t order = t.order();
  Shape out_shape(order);
  Shape src_stride(order);
  for (std::size_t k = 0; k < order; ++k) {
    out_shape[k] = in_shape[perm[k]];
    src_stride[k] = in_strides[perm[k]];
  }

  std::vector<T> out(t.size());
  auto src = t.data();
  // Odometer over the output index; the innermost mode is the hot loop.
  std::vector<std::size_t> idx(order, 0);
  const std::size_t inner = out_shape.back();
  const std::size_t inner_stride = src_stride.back();
  std::size_t dst = 0;
  std::size_t base = 0;
  while (dst < out.size()) {
    for (std::size_t j = 0; j < inner; ++j) out[dst + j] = src[base + j * inner_stride];
    dst += inner;
    // Advance the outer modes.
    std::size_t k = order - 1;
    while (k-- > 0) {
      ++idx[k];
      base += src_stride[k];
      if (idx[k] < out_shape[k]) break;
      base -= src_stride[k] * out_shape[k];
      idx[k] = 0;
    }
  }
  return DenseTensor<T>(std::move(out_shape), std::move(out));
}

template <typename T>
DenseTensor<T> contract(const DenseTensor<T>& a, const DenseTensor<T>& b,
                        std::span<const std::size_t> modes_a,
                        std::span<const std::size_t> modes_b) {
  if (modes_a.size() != modes_b.size()) {
    throw TensorError("contract: " + std::to_string(modes_a.size()) + " modes of a paired with " +
                      std::to_string(modes_b.size()) + " modes of b");
  }
  std::vector<bool> used_a(a.order(), false);
  std::vector<bool> used_b(b.order(), false);
  std::size_t inner = 1;
  for (std::size_t k = 0; k < modes_a.size(); ++k) {
    const auto ma = modes_a[k];
    const auto mb = modes_b[k];
    if (ma >= a.order() || mb >= b.order() || used_a[ma] || used_b[mb]) {
      throw TensorError("contract: invalid or repeated mode pair (" + std::to_string(ma) + "," +
                        std::to_string(mb) + ")");
    }
    if (a.dim(ma) != b.dim(mb)) {
      throw TensorError("contract: dimension mismatch on pair (a mode " + std::to_string(ma) +
                        " = " + std::to_string(a.dim(ma)) + ", b mode " + std::to_string(mb) +
                        " = " + std::to_string(b.dim(mb)) + ")");
    }
    used_a[ma] = used_b[mb] = true;
    inner *= a.dim(ma);
  }

  // a -> (free_a, contracted), b -> (contracted, free_b), then one GEMM.
  std::vector<std::size_t> perm_a;
  std::vector<std::size_t> perm_b(modes_b.begin(), modes_b.end());
  Shape out_shape;
  std::size_t rows = 1;
  std::size_t cols = 1;
  for (std::size_t m = 0; m < a.order(); ++m) {
    if (!used_a[m]) {
      perm_a.push_back(m);
      out_shape.push_back(a.dim(m));
      rows *= a.dim(m);
    }
  }
  perm_a.insert(perm_a.end(), modes_a.begin(), modes_a.end());
  for (std::size_t m = 0; m < b.order(); ++m) {
    if (!used_b[m]) {
      perm_b.push_back(m);
      out_shape.push_back(b.dim(m));
      cols *= b.dim(m);
    }
  }
  if (out_shape.empty()) out_shape.push_back(1);

  const auto pa = permute_modes(a, perm_a);
  const auto pb = permute_modes(b, perm_b);
  std::vector<T> out(rows * cols);
  detail::view(out.data(), rows, cols).noalias() =
      detail::view(pa.data().data(), rows, inner) * detail::view(pb.data().data(), inner, cols);
  return DenseTensor<T>(std::move(out_shape), std::move(out));
}

template <typename T>
T max_abs_diff(const DenseTensor<T>& a, const DenseTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw TensorError("max_abs_diff: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                      shape_to_string(b.shape()));
  }
  T m{0};
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
T max_abs(const DenseTensor<T>& a) {
  T m{0};
  for (auto v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

#define RSTD_INSTANTIATE(T)                                                                      \
  template class DenseTensor<T>;                                                                 \
  template DenseTensor<T> permute_modes(const DenseTensor<T>&, std::span<const std::size_t>);    \
  template DenseTensor<T> contract(const DenseTensor<T>&, const DenseTensor<T>&,                 \
                                   std::span<const std::size_t>, std::span<const std::size_t>);  \
  template T max_abs_diff(const DenseTensor<T>&, const DenseTensor<T>&);                         \
  template T max_abs(const DenseTensor<T>&);

RSTD_INSTANTIATE(float)
RSTD_INSTANTIATE(double)
#undef RSTD_INSTANTIATE

}  // namespace rstd
