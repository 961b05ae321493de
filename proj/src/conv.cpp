#include <algorithm>

#include "gemm.hpp"
#include "rstd/nn.hpp"

namespace rstd {

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry g) {
  if (g.stride == 0) throw ShapeError("convolution stride must be >= 1");
  const std::size_t padded = in + 2 * g.padding;
  if (padded < kernel) {
    throw ShapeError("convolution output extent is not positive (input " + std::to_string(in) +
                     ", kernel " + std::to_string(kernel) + ", padding " +
                     std::to_string(g.padding) + ")");
  }
  return (padded - kernel) / g.stride + 1;
}

namespace {

struct ConvDims {
  std::size_t batch, in_ch, in_h, in_w, k_h, k_w, out_ch, out_h, out_w;
  std::size_t patch() const { return in_ch * k_h * k_w; }
  std::size_t positions() const { return out_h * out_w; }
};

template <typename T>
ConvDims conv_dims(const DenseTensor<T>& x, const DenseTensor<T>& kernel, ConvGeometry g) {
  if (x.order() != 4) throw ShapeError("conv input must be (batch, C, H, W), got " + shape_to_string(x.shape()));
  if (kernel.order() != 4) throw ShapeError("conv kernel must be (I, H, W, O), got " + shape_to_string(kernel.shape()));
  if (x.dim(1) != kernel.dim(0)) {
    throw ShapeError("conv channel mismatch: input has " + std::to_string(x.dim(1)) +
                     " channels, kernel expects " + std::to_string(kernel.dim(0)));
  }
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel.dim(1), kernel.dim(2), kernel.dim(3), 0, 0};
  d.out_h = conv_output_extent(d.in_h, d.k_h, g);
  d.out_w = conv_output_extent(d.in_w, d.k_w, g);
  return d;
}

// col[(c*kh + u)*kw + v][oy*out_w + ox] = x[c, oy*s + u - p, ox*s + v - p]
template <typename T>
void im2col(const T* x, const ConvDims& d, ConvGeometry g, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < d.in_ch; ++c) {
    const T* plane = x + c * d.in_h * d.in_w;
    for (std::size_t u = 0; u < d.k_h; ++u) {
      for (std::size_t v = 0; v < d.k_w; ++v) {
        T* row = col + ((c * d.k_h + u) * d.k_w + v) * d.positions();
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + u) - pad;
          T* dst = row + oy * d.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.in_h)) {
            std::fill(dst, dst + d.out_w, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * d.in_w;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + v) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.in_w)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, ConvGeometry g, T* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < d.in_ch; ++c) {
    T* plane = dx + c * d.in_h * d.in_w;
    for (std::size_t u = 0; u < d.k_h; ++u) {
      for (std::size_t v = 0; v < d.k_w; ++v) {
        const T* row = col + ((c * d.k_h + u) * d.k_w + v) * d.positions();
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + u) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * d.in_w;
          const T* src = row + oy * d.out_w;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + v) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(d.in_w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
DenseTensor<T> conv2d_forward(const DenseTensor<T>& x, const DenseTensor<T>& kernel,
                              std::span<const T> bias, ConvGeometry g) {
  const auto d = conv_dims(x, kernel, g);
  if (!bias.empty() && bias.size() != d.out_ch) {
    throw ShapeError("conv bias has " + std::to_string(bias.size()) + " entries for " +
                     std::to_string(d.out_ch) + " output channels");
  }
  std::vector<T> out(d.batch * d.out_ch * d.positions());
  std::vector<T> col(d.patch() * d.positions());
  // (I,H,W,O) row-major is already the [patch, O] matrix.
  const auto k = detail::view(kernel.data().data(), d.patch(), d.out_ch);
  for (std::size_t n = 0; n < d.batch; ++n) {
    im2col(x.data().data() + n * d.in_ch * d.in_h * d.in_w, d, g, col.data());
    auto y = detail::view(out.data() + n * d.out_ch * d.positions(), d.out_ch, d.positions());
    y.noalias() = k.transpose() * detail::view(col.data(), d.patch(), d.positions());
    if (!bias.empty()) {
      for (std::size_t o = 0; o < d.out_ch; ++o) y.row(static_cast<Eigen::Index>(o)).array() += bias[o];
    }
  }
  return DenseTensor<T>({d.batch, d.out_ch, d.out_h, d.out_w}, std::move(out));
}

template <typename T>
ConvGrads<T> conv2d_backward(const DenseTensor<T>& x, const DenseTensor<T>& kernel,
                             const DenseTensor<T>& dy, ConvGeometry g, bool need_dx) {
  const auto d = conv_dims(x, kernel, g);
  const Shape y_shape{d.batch, d.out_ch, d.out_h, d.out_w};
  if (dy.shape() != y_shape) {
    throw ShapeError("conv upstream gradient has shape " + shape_to_string(dy.shape()) +
                     ", forward output is " + shape_to_string(y_shape));
  }
  auto dx = need_dx ? DenseTensor<T>::zeros(x.shape()) : DenseTensor<T>();
  auto dkernel = DenseTensor<T>::zeros(kernel.shape());
  auto dbias = DenseTensor<T>::zeros({d.out_ch});
  std::vector<T> col(d.patch() * d.positions());
  std::vector<T> dcol(need_dx ? col.size() : 0);
  const auto k = detail::view(kernel.data().data(), d.patch(), d.out_ch);
  auto dk = detail::view(dkernel.mutable_data().data(), d.patch(), d.out_ch);
  for (std::size_t n = 0; n < d.batch; ++n) {
    const auto g_out = detail::view(dy.data().data() + n * d.out_ch * d.positions(), d.out_ch, d.positions());
    im2col(x.data().data() + n * d.in_ch * d.in_h * d.in_w, d, g, col.data());
    dk.noalias() += detail::view(col.data(), d.patch(), d.positions()) * g_out.transpose();
    for (std::size_t o = 0; o < d.out_ch; ++o) dbias[o] += g_out.row(static_cast<Eigen::Index>(o)).sum();
    if (need_dx) {
      detail::view(dcol.data(), d.patch(), d.positions()).noalias() = k * g_out;
      col2im_add(dcol.data(), d, g, dx.mutable_data().data() + n * d.in_ch * d.in_h * d.in_w);
    }
  }
  return {std::move(dx), std::move(dkernel), std::move(dbias)};
}

template DenseTensor<float> conv2d_forward(const DenseTensor<float>&, const DenseTensor<float>&,
                                           std::span<const float>, ConvGeometry);
template DenseTensor<double> conv2d_forward(const DenseTensor<double>&, const DenseTensor<double>&,
                                            std::span<const double>, ConvGeometry);
template ConvGrads<float> conv2d_backward(const DenseTensor<float>&, const DenseTensor<float>&,
                                          const DenseTensor<float>&, ConvGeometry, bool);
template ConvGrads<double> conv2d_backward(const DenseTensor<double>&, const DenseTensor<double>&,
                                           const DenseTensor<double>&, ConvGeometry, bool);

}  // namespace rstd
