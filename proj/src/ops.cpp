#include <algorithm>
#include <cmath>

#include "gemm.hpp"
#include "rstd/nn.hpp"

namespace rstd {

template <typename T>
BatchNormParams<T> BatchNormParams<T>::init(std::size_t channels) {
  return {DenseTensor<T>::filled({channels}, T{1}), DenseTensor<T>::zeros({channels}),
          DenseTensor<T>::zeros({channels}), DenseTensor<T>::filled({channels}, T{1})};
}

namespace {

template <typename T>
void check_bn(const DenseTensor<T>& x, const BatchNormParams<T>& bn) {
  if (x.order() != 4) throw ShapeError("batch norm input must be (batch, C, H, W)");
  const auto c = x.dim(1);
  if (bn.scale.size() != c || bn.shift.size() != c || bn.running_mean.size() != c ||
      bn.running_var.size() != c) {
    throw ShapeError("batch norm parameters do not match " + std::to_string(c) + " channels");
  }
}

}  // namespace

template <typename T>
DenseTensor<T> batchnorm_forward(const DenseTensor<T>& x, BatchNormParams<T>& bn, Phase phase,
                                 BatchNormCache<T>* cache) {
  check_bn(x, bn);
  const auto batch = x.dim(0);
  const auto channels = x.dim(1);
  const auto plane = x.dim(2) * x.dim(3);
  const auto count = batch * plane;
  if (phase == Phase::Train && batch == 0) throw ShapeError("batch norm needs a nonempty batch");

  std::vector<T> out(x.size());
  std::vector<T> x_hat(cache ? x.size() : 0);
  std::vector<T> inv_stds(channels);
  const auto in = x.data();
  for (std::size_t c = 0; c < channels; ++c) {
    double mean;
    double var;
    if (phase == Phase::Train) {
      double sum = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = in.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = in.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double dlt = p[i] - mean;
          sq += dlt * dlt;
        }
      }
      var = sq / static_cast<double>(count);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      bn.running_mean[c] = static_cast<T>((1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * mean);
      bn.running_var[c] = static_cast<T>((1.0 - bn.momentum) * bn.running_var[c] + bn.momentum * unbiased);
    } else {
      mean = bn.running_mean[c];
      var = bn.running_var[c];
    }
    const T inv_std = static_cast<T>(1.0 / std::sqrt(var + bn.epsilon));
    const T m = static_cast<T>(mean);
    inv_stds[c] = inv_std;
    const T scale = bn.scale[c];
    const T shift = bn.shift[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const auto off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (in[off + i] - m) * inv_std;
        if (cache) x_hat[off + i] = h;
        out[off + i] = scale * h + shift;
      }
    }
  }
  if (cache) {
    cache->x_hat = DenseTensor<T>(x.shape(), std::move(x_hat));
    cache->inv_std = std::move(inv_stds);
    cache->phase = phase;
  }
  return DenseTensor<T>(x.shape(), std::move(out));
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormParams<T>& bn, const BatchNormCache<T>& cache,
                                     const DenseTensor<T>& dy) {
  if (dy.shape() != cache.x_hat.shape()) throw ShapeError("batch norm upstream gradient shape mismatch");
  const auto batch = dy.dim(0);
  const auto channels = dy.dim(1);
  const auto plane = dy.dim(2) * dy.dim(3);
  const auto count = static_cast<double>(batch * plane);
  auto dx = DenseTensor<T>::zeros(dy.shape());
  auto dscale = DenseTensor<T>::zeros({channels});
  auto dshift = DenseTensor<T>::zeros({channels});
  const auto g = dy.data();
  const auto h = cache.x_hat.data();
  auto out = dx.mutable_data();
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_g = 0.0;
    double sum_gh = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const auto off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += g[off + i];
        sum_gh += static_cast<double>(g[off + i]) * h[off + i];
      }
    }
    dshift[c] = static_cast<T>(sum_g);
    dscale[c] = static_cast<T>(sum_gh);
    const double k = static_cast<double>(bn.scale[c]) * cache.inv_std[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const auto off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (cache.phase == Phase::Train) {
          out[off + i] = static_cast<T>(k * (g[off + i] - sum_g / count - h[off + i] * sum_gh / count));
        } else {
          out[off + i] = static_cast<T>(k * g[off + i]);
        }
      }
    }
  }
  return {std::move(dx), std::move(dscale), std::move(dshift)};
}

template <typename T>
DenseTensor<T> relu_forward(const DenseTensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::max(v, T{0});
  return DenseTensor<T>(x.shape(), std::move(out));
}

template <typename T>
DenseTensor<T> relu_backward(const DenseTensor<T>& x, const DenseTensor<T>& dy) {
  if (x.shape() != dy.shape()) throw ShapeError("relu upstream gradient shape mismatch");
  std::vector<T> out(dy.data().begin(), dy.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > T{0})) out[i] = T{0};
  }
  return DenseTensor<T>(x.shape(), std::move(out));
}

template <typename T>
DenseTensor<T> global_average_pool_forward(const DenseTensor<T>& x) {
  if (x.order() != 4) throw ShapeError("global average pooling expects (batch, C, H, W)");
  const auto rows = x.dim(0) * x.dim(1);
  const auto plane = x.dim(2) * x.dim(3);
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += x[r * plane + i];
    out[r] = static_cast<T>(s / static_cast<double>(plane));
  }
  return DenseTensor<T>({x.dim(0), x.dim(1)}, std::move(out));
}

template <typename T>
DenseTensor<T> global_average_pool_backward(const Shape& input_shape, const DenseTensor<T>& dy) {
  if (input_shape.size() != 4 || dy.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw ShapeError("global average pooling gradient shape mismatch");
  }
  const auto plane = input_shape[2] * input_shape[3];
  const T inv = T{1} / static_cast<T>(plane);
  std::vector<T> out(shape_product(input_shape));
  for (std::size_t r = 0; r < dy.size(); ++r) {
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(r * plane), plane, dy[r] * inv);
  }
  return DenseTensor<T>(input_shape, std::move(out));
}

template <typename T>
DenseTensor<T> fully_connected_forward(const DenseTensor<T>& x, const DenseTensor<T>& weights,
                                       const DenseTensor<T>& bias) {
  if (x.order() != 2 || weights.order() != 2 || x.dim(1) != weights.dim(1) ||
      bias.size() != weights.dim(0)) {
    throw ShapeError("fully connected shapes: x " + shape_to_string(x.shape()) + ", weights " +
                     shape_to_string(weights.shape()) + ", bias " + shape_to_string(bias.shape()));
  }
  const auto n = x.dim(0);
  const auto out_dim = weights.dim(0);
  std::vector<T> out(n * out_dim);
  auto y = detail::view(out.data(), n, out_dim);
  y.noalias() = detail::view(x.data().data(), n, x.dim(1)) *
                detail::view(weights.data().data(), out_dim, x.dim(1)).transpose();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < out_dim; ++o) out[r * out_dim + o] += bias[o];
  }
  return DenseTensor<T>({n, out_dim}, std::move(out));
}

template <typename T>
FullyConnectedGrads<T> fully_connected_backward(const DenseTensor<T>& x,
                                                const DenseTensor<T>& weights,
                                                const DenseTensor<T>& dy) {
  const auto n = x.dim(0);
  const auto in_dim = x.dim(1);
  const auto out_dim = weights.dim(0);
  if (dy.shape() != Shape{n, out_dim}) throw ShapeError("fully connected upstream gradient shape mismatch");
  auto dx = DenseTensor<T>::zeros(x.shape());
  auto dw = DenseTensor<T>::zeros(weights.shape());
  auto db = DenseTensor<T>::zeros({out_dim});
  const auto g = detail::view(dy.data().data(), n, out_dim);
  detail::view(dx.mutable_data().data(), n, in_dim).noalias() =
      g * detail::view(weights.data().data(), out_dim, in_dim);
  detail::view(dw.mutable_data().data(), out_dim, in_dim).noalias() =
      g.transpose() * detail::view(x.data().data(), n, in_dim);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < out_dim; ++o) db[o] += dy[r * out_dim + o];
  }
  return {std::move(dx), std::move(dw), std::move(db)};
}

template <typename T>
LossResult<T> softmax_cross_entropy(const DenseTensor<T>& logits, std::span<const int> labels) {
  if (logits.order() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_to_string(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  const auto n = logits.dim(0);
  const auto classes = logits.dim(1);
  std::vector<T> grad(logits.size());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ShapeError("label " + std::to_string(label) + " outside [0," + std::to_string(classes) + ")");
    }
    const T* z = logits.data().data() + r * classes;
    const double zmax = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] - zmax);
    const double log_denom = std::log(denom);
    total += log_denom - (z[label] - zmax);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(z[c] - zmax - log_denom);
      grad[r * classes + c] = static_cast<T>((p - (static_cast<int>(c) == label ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  return {static_cast<T>(total / static_cast<double>(n)), DenseTensor<T>(logits.shape(), std::move(grad))};
}

#define RSTD_INSTANTIATE(T)                                                                        \
  template struct BatchNormParams<T>;                                                              \
  template DenseTensor<T> batchnorm_forward(const DenseTensor<T>&, BatchNormParams<T>&, Phase,     \
                                            BatchNormCache<T>*);                                   \
  template BatchNormGrads<T> batchnorm_backward(const BatchNormParams<T>&,                         \
                                                const BatchNormCache<T>&, const DenseTensor<T>&);  \
  template DenseTensor<T> relu_forward(const DenseTensor<T>&);                                     \
  template DenseTensor<T> relu_backward(const DenseTensor<T>&, const DenseTensor<T>&);             \
  template DenseTensor<T> global_average_pool_forward(const DenseTensor<T>&);                      \
  template DenseTensor<T> global_average_pool_backward(const Shape&, const DenseTensor<T>&);       \
  template DenseTensor<T> fully_connected_forward(const DenseTensor<T>&, const DenseTensor<T>&,    \
                                                  const DenseTensor<T>&);                          \
  template FullyConnectedGrads<T> fully_connected_backward(                                        \
      const DenseTensor<T>&, const DenseTensor<T>&, const DenseTensor<T>&);                        \
  template LossResult<T> softmax_cross_entropy(const DenseTensor<T>&, std::span<const int>);

RSTD_INSTANTIATE(float)
RSTD_INSTANTIATE(double)
#undef RSTD_INSTANTIATE

}  // namespace rstd
