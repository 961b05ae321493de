#include <cmath>

#include "rstd/nn.hpp"

namespace rstd {

namespace {

template <typename T>
std::span<const T> bias_span(const std::optional<DenseTensor<T>>& bias) {
  return bias ? bias->data() : std::span<const T>{};
}

Shape conv_output_shape(const Shape& input, const KernelDims& k, ConvGeometry g) {
  if (input.size() != 4 || input[1] != k.in) {
    throw ShapeError("conv expects (batch, " + std::to_string(k.in) + ", H, W) input, got " +
                     shape_to_string(input));
  }
  return {input[0], k.out, conv_output_extent(input[2], k.height, g),
          conv_output_extent(input[3], k.width, g)};
}

}  // namespace

// --- Conv2dLayer ------------------------------------------------------------

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::string name, DenseTensor<T> kernel,
                            std::optional<DenseTensor<T>> bias, ConvGeometry g)
    : Layer<T>(std::move(name)),
      kernel_(std::move(kernel)),
      dkernel_(DenseTensor<T>::zeros(kernel_.shape())),
      bias_(std::move(bias)),
      geometry_(g) {
  if (kernel_.order() != 4) throw ShapeError("conv kernel must be (I, H, W, O)");
  if (bias_) {
    if (bias_->size() != kernel_.dim(3)) throw ShapeError("conv bias length must equal O");
    dbias_ = DenseTensor<T>::zeros(bias_->shape());
  }
}

template <typename T>
DenseTensor<T> Conv2dLayer<T>::forward(const DenseTensor<T>& x, Phase phase) {
  if (phase == Phase::Train) input_ = x;
  return conv2d_forward(x, kernel_, bias_span(bias_), geometry_);
}

template <typename T>
DenseTensor<T> Conv2dLayer<T>::backward(const DenseTensor<T>& dy) {
  auto g = conv2d_backward(input_, kernel_, dy, geometry_, !first_layer);
  dkernel_ = std::move(g.dkernel);
  if (bias_) dbias_ = std::move(g.dbias);
  return std::move(g.dx);
}

template <typename T>
Shape Conv2dLayer<T>::output_shape(const Shape& input) const {
  return conv_output_shape(input, {kernel_.dim(0), kernel_.dim(1), kernel_.dim(2), kernel_.dim(3)},
                           geometry_);
}

template <typename T>
void Conv2dLayer<T>::parameters(std::vector<ParamRef<T>>& out) {
  out.push_back({this->name() + ".kernel", &kernel_, &dkernel_});
  if (bias_) out.push_back({this->name() + ".bias", &*bias_, &*dbias_});
}

// --- FactorizedConvLayer ----------------------------------------------------

template <typename T>
FactorizedConvLayer<T>::FactorizedConvLayer(std::string name, TDTopology topology,
                                            CoreSet<T> cores, std::optional<Permutation> shuffle,
                                            std::optional<DenseTensor<T>> bias, ConvGeometry g)
    : Layer<T>(std::move(name)),
      topology_(std::move(topology)),
      cores_(std::move(cores)),
      bias_(std::move(bias)),
      geometry_(g) {
  const auto& md = topology_.mode_dims();
  if (md.size() != 4) throw ShapeError("factorized conv topology must reconstruct an (I,H,W,O) kernel");
  dims_ = {md[kModeIn], md[kModeHeight], md[kModeWidth], md[kModeOut]};
  check_cores(topology_, cores_);
  for (const auto& c : cores_) dcores_.push_back(DenseTensor<T>::zeros(c.shape()));
  set_shuffle(std::move(shuffle));
  if (bias_) {
    if (bias_->size() != dims_.out) throw ShapeError("factorized conv bias length must equal O");
    dbias_ = DenseTensor<T>::zeros(bias_->shape());
  }
}

template <typename T>
void FactorizedConvLayer<T>::set_shuffle(std::optional<Permutation> p) {
  if (p && p->size() != dims_.size()) {
    throw ShapeError("shuffle permutation size " + std::to_string(p->size()) +
                     " does not match kernel size " + std::to_string(dims_.size()));
  }
  shuffle_ = std::move(p);
}

template <typename T>
DenseTensor<T> FactorizedConvLayer<T>::effective_kernel() const {
  auto w = reconstruct(topology_, cores_);
  return shuffle_ ? apply_shuffle(*shuffle_, w) : w;
}

template <typename T>
DenseTensor<T> factorized_conv_forward(const FactorizedConvLayer<T>& layer, const DenseTensor<T>& x) {
  return conv2d_forward(x, layer.effective_kernel(), bias_span(layer.bias()), layer.geometry());
}

namespace {

template <typename T>
FactorizedConvGrads<T> factorized_backward_impl(const FactorizedConvLayer<T>& layer,
                                                const DenseTensor<T>& x, const DenseTensor<T>& dy,
                                                bool need_dx) {
  auto g = conv2d_backward(x, layer.effective_kernel(), dy, layer.geometry(), need_dx);
  const auto routed = layer.shuffle() ? apply_inverse_shuffle(*layer.shuffle(), g.dkernel) : g.dkernel;
  return {std::move(g.dx), reconstruct_gradient(layer.topology(), layer.cores(), routed),
          std::move(g.dbias)};
}

}  // namespace

template <typename T>
FactorizedConvGrads<T> factorized_conv_backward(const FactorizedConvLayer<T>& layer,
                                                const DenseTensor<T>& x, const DenseTensor<T>& dy) {
  return factorized_backward_impl(layer, x, dy, true);
}

template <typename T>
DenseTensor<T> FactorizedConvLayer<T>::forward(const DenseTensor<T>& x, Phase phase) {
  if (phase == Phase::Train) input_ = x;
  return factorized_conv_forward(*this, x);
}

template <typename T>
DenseTensor<T> FactorizedConvLayer<T>::backward(const DenseTensor<T>& dy) {
  auto g = factorized_backward_impl(*this, input_, dy, true);
  dcores_ = std::move(g.dcores);
  if (bias_) dbias_ = std::move(g.dbias);
  return std::move(g.dx);
}

template <typename T>
Shape FactorizedConvLayer<T>::output_shape(const Shape& input) const {
  return conv_output_shape(input, dims_, geometry_);
}

template <typename T>
void FactorizedConvLayer<T>::parameters(std::vector<ParamRef<T>>& out) {
  for (std::size_t i = 0; i < cores_.size(); ++i) {
    out.push_back({this->name() + ".core" + std::to_string(i), &cores_[i], &dcores_[i]});
  }
  if (bias_) out.push_back({this->name() + ".bias", &*bias_, &*dbias_});
}

// --- BatchNormLayer ---------------------------------------------------------

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::string name, std::size_t channels)
    : Layer<T>(std::move(name)),
      bn_(BatchNormParams<T>::init(channels)),
      dscale_(DenseTensor<T>::zeros({channels})),
      dshift_(DenseTensor<T>::zeros({channels})) {}

template <typename T>
DenseTensor<T> BatchNormLayer<T>::forward(const DenseTensor<T>& x, Phase phase) {
  return batchnorm_forward(x, bn_, phase, phase == Phase::Train ? &cache_ : nullptr);
}

template <typename T>
DenseTensor<T> BatchNormLayer<T>::backward(const DenseTensor<T>& dy) {
  auto g = batchnorm_backward(bn_, cache_, dy);
  dscale_ = std::move(g.dscale);
  dshift_ = std::move(g.dshift);
  return std::move(g.dx);
}

template <typename T>
void BatchNormLayer<T>::parameters(std::vector<ParamRef<T>>& out) {
  out.push_back({this->name() + ".scale", &bn_.scale, &dscale_});
  out.push_back({this->name() + ".shift", &bn_.shift, &dshift_});
}

template <typename T>
void BatchNormLayer<T>::buffers(std::vector<ParamRef<T>>& out) {
  out.push_back({this->name() + ".running_mean", &bn_.running_mean, nullptr});
  out.push_back({this->name() + ".running_var", &bn_.running_var, nullptr});
}

// --- ReLU / pooling / fully connected --------------------------------------

template <typename T>
DenseTensor<T> ReluLayer<T>::forward(const DenseTensor<T>& x, Phase phase) {
  if (phase == Phase::Train) input_ = x;
  return relu_forward(x);
}

template <typename T>
DenseTensor<T> ReluLayer<T>::backward(const DenseTensor<T>& dy) {
  return relu_backward(input_, dy);
}

template <typename T>
DenseTensor<T> GlobalAvgPoolLayer<T>::forward(const DenseTensor<T>& x, Phase) {
  input_shape_ = x.shape();
  return global_average_pool_forward(x);
}

template <typename T>
DenseTensor<T> GlobalAvgPoolLayer<T>::backward(const DenseTensor<T>& dy) {
  return global_average_pool_backward(input_shape_, dy);
}

template <typename T>
Shape GlobalAvgPoolLayer<T>::output_shape(const Shape& input) const {
  if (input.size() != 4) throw ShapeError("global average pooling expects (batch, C, H, W)");
  return {input[0], input[1]};
}

template <typename T>
FullyConnectedLayer<T>::FullyConnectedLayer(std::string name, DenseTensor<T> weights,
                                            DenseTensor<T> bias)
    : Layer<T>(std::move(name)),
      weights_(std::move(weights)),
      dweights_(DenseTensor<T>::zeros(weights_.shape())),
      bias_(std::move(bias)),
      dbias_(DenseTensor<T>::zeros(bias_.shape())) {
  if (weights_.order() != 2 || bias_.size() != weights_.dim(0)) {
    throw ShapeError("fully connected layer needs (out, in) weights and (out) bias");
  }
}

template <typename T>
DenseTensor<T> FullyConnectedLayer<T>::forward(const DenseTensor<T>& x, Phase phase) {
  if (phase == Phase::Train) input_ = x;
  return fully_connected_forward(x, weights_, bias_);
}

template <typename T>
DenseTensor<T> FullyConnectedLayer<T>::backward(const DenseTensor<T>& dy) {
  auto g = fully_connected_backward(input_, weights_, dy);
  dweights_ = std::move(g.dweights);
  dbias_ = std::move(g.dbias);
  return std::move(g.dx);
}

template <typename T>
Shape FullyConnectedLayer<T>::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != weights_.dim(1)) {
    throw ShapeError("fully connected expects (batch, " + std::to_string(weights_.dim(1)) +
                     ") input, got " + shape_to_string(input));
  }
  return {input[0], weights_.dim(0)};
}

template <typename T>
void FullyConnectedLayer<T>::parameters(std::vector<ParamRef<T>>& out) {
  out.push_back({this->name() + ".weights", &weights_, &dweights_});
  out.push_back({this->name() + ".bias", &bias_, &dbias_});
}

#define RSTD_INSTANTIATE(T)                                                                   \
  template class Conv2dLayer<T>;                                                              \
  template class FactorizedConvLayer<T>;                                                      \
  template class BatchNormLayer<T>;                                                           \
  template class ReluLayer<T>;                                                                \
  template class GlobalAvgPoolLayer<T>;                                                       \
  template class FullyConnectedLayer<T>;                                                      \
  template DenseTensor<T> factorized_conv_forward(const FactorizedConvLayer<T>&,              \
                                                  const DenseTensor<T>&);                     \
  template FactorizedConvGrads<T> factorized_conv_backward(                                   \
      const FactorizedConvLayer<T>&, const DenseTensor<T>&, const DenseTensor<T>&);

RSTD_INSTANTIATE(float)
RSTD_INSTANTIATE(double)
#undef RSTD_INSTANTIATE

}  // namespace rstd
