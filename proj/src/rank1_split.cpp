#include "rstd/nn.hpp"
#include "rstd/tdmodel.hpp"

namespace rstd {

template <typename T>
DenseTensor<T> rank1_tr_split_forward(const TDTopology& topology, const CoreSet<T>& cores,
                                      const DenseTensor<T>& x, ConvGeometry geometry) {
  if (topology.kind() != TopologyKind::TR || topology.n_cores() != 4) {
    throw TopologyError("split forward needs a 4-core TR topology");
  }
  for (auto r : topology.bond_ranks()) {
    if (r != 1) throw TopologyError("split forward needs every TR bond rank to be 1, found " + std::to_string(r));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& fm = topology.free_modes(i);
    if (fm.size() != 1 || fm[0].mode != i) {
      throw TopologyError("split forward needs core i to carry kernel mode i");
    }
  }
  check_cores(topology, cores);

  // With unit bonds each core is a vector over its free mode.
  const auto& md = topology.mode_dims();
  const auto in = cores[kModeIn].data();
  const auto hgt = cores[kModeHeight].data();
  const auto wid = cores[kModeWidth].data();
  const auto out = cores[kModeOut].data();
  std::vector<T> merged(md[kModeIn] * md[kModeHeight] * md[kModeWidth]);
  std::size_t k = 0;
  for (std::size_t i = 0; i < md[kModeIn]; ++i) {
    for (std::size_t h = 0; h < md[kModeHeight]; ++h) {
      for (std::size_t w = 0; w < md[kModeWidth]; ++w) merged[k++] = in[i] * hgt[h] * wid[w];
    }
  }
  const DenseTensor<T> latent_kernel({md[kModeIn], md[kModeHeight], md[kModeWidth], 1}, std::move(merged));
  const auto latent = conv2d_forward(x, latent_kernel, std::span<const T>{}, geometry);

  // Mix the single latent channel into every output channel.
  const auto batch = latent.dim(0);
  const auto plane = latent.dim(2) * latent.dim(3);
  const auto channels = md[kModeOut];
  std::vector<T> y(batch * channels * plane);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* src = latent.data().data() + n * plane;
    for (std::size_t o = 0; o < channels; ++o) {
      T* dst = y.data() + (n * channels + o) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = out[o] * src[p];
    }
  }
  return DenseTensor<T>({batch, channels, latent.dim(2), latent.dim(3)}, std::move(y));
}

template DenseTensor<float> rank1_tr_split_forward(const TDTopology&, const CoreSet<float>&,
                                                   const DenseTensor<float>&, ConvGeometry);
template DenseTensor<double> rank1_tr_split_forward(const TDTopology&, const CoreSet<double>&,
                                                    const DenseTensor<double>&, ConvGeometry);

}  // namespace rstd
