#include <cmath>
#include <set>

#include "rstd/nn.hpp"

namespace rstd {

template <typename T>
void Network<T>::add(std::unique_ptr<Layer<T>> layer) {
  layers_.push_back(std::move(layer));
}

template <typename T>
DenseTensor<T> Network<T>::forward(const DenseTensor<T>& x, Phase phase) {
  DenseTensor<T> h = x;
  for (auto& layer : layers_) h = layer->forward(h, phase);
  return h;
}

template <typename T>
void Network<T>::backward(const DenseTensor<T>& dlogits) {
  DenseTensor<T> g = dlogits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::parameters() {
  std::vector<ParamRef<T>> out;
  for (auto& layer : layers_) layer->parameters(out);
  return out;
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::state() {
  auto out = parameters();
  for (auto& layer : layers_) layer->buffers(out);
  std::set<std::string> names;
  for (const auto& p : out) {
    if (!names.insert(p.name).second) throw Error("duplicate parameter name " + p.name);
  }
  return out;
}

template <typename T>
std::size_t Network<T>::trainable_param_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value->size();
  return n;
}

template <typename T>
std::vector<Shape> Network<T>::shape_trace(const Shape& input) const {
  std::vector<Shape> out;
  Shape s = input;
  for (const auto& layer : layers_) {
    s = layer->output_shape(s);
    out.push_back(s);
  }
  return out;
}

template <typename T>
Shape Network<T>::check_shapes(const Shape& input) const {
  const auto trace = shape_trace(input);
  return trace.empty() ? input : trace.back();
}

std::vector<std::size_t> uniform_ranks(TopologyKind kind, std::size_t rank,
                                       const ModeGrouping& grouping) {
  switch (kind) {
    case TopologyKind::TT:
      return std::vector<std::size_t>(3, rank);
    case TopologyKind::TR:
      return std::vector<std::size_t>(4, rank);
    case TopologyKind::TTMatrix:
      return std::vector<std::size_t>(grouping.size() - 1, rank);
    case TopologyKind::Custom:
      break;
  }
  throw TopologyError("uniform ranks are defined for TT, TT-matrix and TR only");
}

namespace {

template <typename T>
DenseTensor<T> gaussian(const Shape& shape, double stddev, Rng& rng) {
  std::vector<T> v(shape_product(shape));
  for (auto& x : v) x = static_cast<T>(stddev * rng.normal());
  return DenseTensor<T>(shape, std::move(v));
}

}  // namespace

template <typename T>
Network<T> build_table1_network(const Table1Options& options) {
  if (!options.layers.empty() && options.layers.size() != kTable1ConvLayers) {
    throw Error("compression spec must list " + std::to_string(kTable1ConvLayers) +
                " conv layers, got " + std::to_string(options.layers.size()));
  }
  if (!options.layers.empty() && options.layers[0].compressed) {
    throw Error("the first conv layer is never compressed");
  }
  if (options.channels == 0 || options.in_channels == 0 || options.num_classes == 0) {
    throw Error("channel and class counts must be >= 1");
  }

  Network<T> net;
  std::size_t in_ch = options.in_channels;
  for (std::size_t l = 0; l < kTable1ConvLayers; ++l) {
    const std::size_t layer_id = l + 1;
    const std::string tag = std::to_string(layer_id);
    const ConvGeometry g{kTable1Strides[l], 1};
    const KernelDims dims{in_ch, 3, 3, options.channels};
    const auto spec = options.layers.empty() ? LayerCompression::none() : options.layers[l];
    Rng rng(init_seed(options.seed, layer_id));
    std::optional<DenseTensor<T>> bias;
    if (options.conv_bias) bias = DenseTensor<T>::zeros({options.channels});

    if (spec.compressed) {
      auto topology = build_topology(spec.kind, dims, spec.ranks, spec.grouping);
      auto cores = init_cores<T>(topology, he_variance(dims), rng);
      std::optional<Permutation> shuffle;
      if (spec.shuffled) {
        shuffle = Permutation::from_seed(dims.size(),
                                         spec.seed.value_or(permutation_seed(options.seed, layer_id)));
      }
      net.add(std::make_unique<FactorizedConvLayer<T>>("conv" + tag, std::move(topology),
                                                       std::move(cores), std::move(shuffle),
                                                       std::move(bias), g));
    } else {
      auto kernel = gaussian<T>(dims.shape(), std::sqrt(he_variance(dims)), rng);
      auto conv = std::make_unique<Conv2dLayer<T>>("conv" + tag, std::move(kernel), std::move(bias), g);
      conv->first_layer = l == 0;
      net.add(std::move(conv));
    }
    net.add(std::make_unique<BatchNormLayer<T>>("bn" + tag, options.channels));
    net.add(std::make_unique<ReluLayer<T>>("relu" + tag));
    in_ch = options.channels;
  }
  net.add(std::make_unique<GlobalAvgPoolLayer<T>>("gap"));
  Rng rng(init_seed(options.seed, kTable1ConvLayers + 1));
  auto weights = gaussian<T>({options.num_classes, options.channels},
                             std::sqrt(2.0 / static_cast<double>(options.channels)), rng);
  net.add(std::make_unique<FullyConnectedLayer<T>>("fc", std::move(weights),
                                                   DenseTensor<T>::zeros({options.num_classes})));
  return net;
}

template class Network<float>;
template class Network<double>;
template Network<float> build_table1_network(const Table1Options&);
template Network<double> build_table1_network(const Table1Options&);

}  // namespace rstd
