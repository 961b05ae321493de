#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rstd/shuffle.hpp"
#include "rstd/tdmodel.hpp"
#include "rstd/tensor.hpp"

namespace rstd {

class ShapeError : public Error {
 public:
  using Error::Error;
};

enum class Phase { Train, Eval };

// ---------------------------------------------------------------------------
// Convolution. Features are (batch, channels, height, width); kernels are
// (I, H, W, O). Cross-correlation with zero padding.

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry g);

/// `bias` may be empty (no bias) or hold one value per output channel.
template <typename T>
DenseTensor<T> conv2d_forward(const DenseTensor<T>& x, const DenseTensor<T>& kernel,
                              std::span<const T> bias, ConvGeometry g);

template <typename T>
struct ConvGrads {
  DenseTensor<T> dx;
  DenseTensor<T> dkernel;
  DenseTensor<T> dbias;  // shape [O]
};

template <typename T>
ConvGrads<T> conv2d_backward(const DenseTensor<T>& x, const DenseTensor<T>& kernel,
                             const DenseTensor<T>& dy, ConvGeometry g, bool need_dx = true);

// ---------------------------------------------------------------------------
// Batch normalization over (batch, H, W) per channel.

template <typename T>
struct BatchNormParams {
  DenseTensor<T> scale;
  DenseTensor<T> shift;
  DenseTensor<T> running_mean;
  DenseTensor<T> running_var;  // unbiased batch variance is tracked
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormParams init(std::size_t channels);
};

template <typename T>
struct BatchNormCache {
  DenseTensor<T> x_hat;
  std::vector<T> inv_std;
  Phase phase = Phase::Train;
};

/// Train mode normalizes with batch statistics and updates the running ones.
template <typename T>
DenseTensor<T> batchnorm_forward(const DenseTensor<T>& x, BatchNormParams<T>& bn, Phase phase,
                                 BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  DenseTensor<T> dx;
  DenseTensor<T> dscale;
  DenseTensor<T> dshift;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormParams<T>& bn, const BatchNormCache<T>& cache,
                                     const DenseTensor<T>& dy);

// ---------------------------------------------------------------------------
// Pointwise and head operations.

template <typename T>
DenseTensor<T> relu_forward(const DenseTensor<T>& x);
template <typename T>
DenseTensor<T> relu_backward(const DenseTensor<T>& x, const DenseTensor<T>& dy);

/// (N, C, H, W) -> (N, C)
template <typename T>
DenseTensor<T> global_average_pool_forward(const DenseTensor<T>& x);
template <typename T>
DenseTensor<T> global_average_pool_backward(const Shape& input_shape, const DenseTensor<T>& dy);

/// x (N, in), weights (out, in), bias (out) -> (N, out)
template <typename T>
DenseTensor<T> fully_connected_forward(const DenseTensor<T>& x, const DenseTensor<T>& weights,
                                       const DenseTensor<T>& bias);

template <typename T>
struct FullyConnectedGrads {
  DenseTensor<T> dx;
  DenseTensor<T> dweights;
  DenseTensor<T> dbias;
};

template <typename T>
FullyConnectedGrads<T> fully_connected_backward(const DenseTensor<T>& x,
                                                const DenseTensor<T>& weights,
                                                const DenseTensor<T>& dy);

template <typename T>
struct LossResult {
  T loss;                  // mean over the batch
  DenseTensor<T> dlogits;  // gradient of the mean loss
};

template <typename T>
LossResult<T> softmax_cross_entropy(const DenseTensor<T>& logits, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Layers.

template <typename T>
struct ParamRef {
  std::string name;
  DenseTensor<T>* value;
  DenseTensor<T>* grad;  // null for non-trainable buffers
};

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }

  virtual DenseTensor<T> forward(const DenseTensor<T>& x, Phase phase) = 0;
  /// Consumes the cache of the preceding forward; stores parameter grads.
  virtual DenseTensor<T> backward(const DenseTensor<T>& dy) = 0;
  virtual Shape output_shape(const Shape& input) const = 0;

  /// Trainable parameters with their gradient slots.
  virtual void parameters(std::vector<ParamRef<T>>&) {}
  /// Non-trainable state that a checkpoint must carry.
  virtual void buffers(std::vector<ParamRef<T>>&) {}

 private:
  std::string name_;
};

template <typename T>
class Conv2dLayer final : public Layer<T> {
 public:
  Conv2dLayer(std::string name, DenseTensor<T> kernel, std::optional<DenseTensor<T>> bias,
              ConvGeometry g);

  DenseTensor<T> forward(const DenseTensor<T>& x, Phase phase) override;
  DenseTensor<T> backward(const DenseTensor<T>& dy) override;
  Shape output_shape(const Shape& input) const override;
  void parameters(std::vector<ParamRef<T>>& out) override;

  const DenseTensor<T>& kernel() const { return kernel_; }
  bool first_layer = false;  // skips the input gradient

 private:
  DenseTensor<T> kernel_, dkernel_;
  std::optional<DenseTensor<T>> bias_, dbias_;
  ConvGeometry geometry_;
  DenseTensor<T> input_;
};

/**
 * Convolution whose kernel is R . T_A(cores): the cores are contracted into the
 * full (I,H,W,O) kernel, optionally relocated by a fixed flat-index
 * permutation, then convolved with the input.
 */
template <typename T>
class FactorizedConvLayer final : public Layer<T> {
 public:
  FactorizedConvLayer(std::string name, TDTopology topology, CoreSet<T> cores,
                      std::optional<Permutation> shuffle, std::optional<DenseTensor<T>> bias,
                      ConvGeometry g);

  DenseTensor<T> forward(const DenseTensor<T>& x, Phase phase) override;
  DenseTensor<T> backward(const DenseTensor<T>& dy) override;
  Shape output_shape(const Shape& input) const override;
  void parameters(std::vector<ParamRef<T>>& out) override;

  const TDTopology& topology() const { return topology_; }
  const CoreSet<T>& cores() const { return cores_; }
  CoreSet<T>& mutable_cores() { return cores_; }
  const std::optional<Permutation>& shuffle() const { return shuffle_; }
  void set_shuffle(std::optional<Permutation> p);
  const std::optional<DenseTensor<T>>& bias() const { return bias_; }
  ConvGeometry geometry() const { return geometry_; }
  const KernelDims& kernel_dims() const { return dims_; }

  /// The kernel actually convolved with the input.
  DenseTensor<T> effective_kernel() const;

 private:
  TDTopology topology_;
  CoreSet<T> cores_, dcores_;
  std::optional<Permutation> shuffle_;
  std::optional<DenseTensor<T>> bias_, dbias_;
  ConvGeometry geometry_;
  KernelDims dims_;
  DenseTensor<T> input_;
};

template <typename T>
DenseTensor<T> factorized_conv_forward(const FactorizedConvLayer<T>& layer, const DenseTensor<T>& x);

template <typename T>
struct FactorizedConvGrads {
  DenseTensor<T> dx;
  CoreSet<T> dcores;
  DenseTensor<T> dbias;
};

template <typename T>
FactorizedConvGrads<T> factorized_conv_backward(const FactorizedConvLayer<T>& layer,
                                                const DenseTensor<T>& x, const DenseTensor<T>& dy);

template <typename T>
class BatchNormLayer final : public Layer<T> {
 public:
  BatchNormLayer(std::string name, std::size_t channels);
  DenseTensor<T> forward(const DenseTensor<T>& x, Phase phase) override;
  DenseTensor<T> backward(const DenseTensor<T>& dy) override;
  Shape output_shape(const Shape& input) const override { return input; }
  void parameters(std::vector<ParamRef<T>>& out) override;
  void buffers(std::vector<ParamRef<T>>& out) override;

  BatchNormParams<T>& params() { return bn_; }

 private:
  BatchNormParams<T> bn_;
  DenseTensor<T> dscale_, dshift_;
  BatchNormCache<T> cache_;
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  DenseTensor<T> forward(const DenseTensor<T>& x, Phase phase) override;
  DenseTensor<T> backward(const DenseTensor<T>& dy) override;
  Shape output_shape(const Shape& input) const override { return input; }

 private:
  DenseTensor<T> input_;
};

template <typename T>
class GlobalAvgPoolLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  DenseTensor<T> forward(const DenseTensor<T>& x, Phase phase) override;
  DenseTensor<T> backward(const DenseTensor<T>& dy) override;
  Shape output_shape(const Shape& input) const override;

 private:
  Shape input_shape_;
};

template <typename T>
class FullyConnectedLayer final : public Layer<T> {
 public:
  FullyConnectedLayer(std::string name, DenseTensor<T> weights, DenseTensor<T> bias);
  DenseTensor<T> forward(const DenseTensor<T>& x, Phase phase) override;
  DenseTensor<T> backward(const DenseTensor<T>& dy) override;
  Shape output_shape(const Shape& input) const override;
  void parameters(std::vector<ParamRef<T>>& out) override;

 private:
  DenseTensor<T> weights_, dweights_, bias_, dbias_;
  DenseTensor<T> input_;
};

// ---------------------------------------------------------------------------
// Network.

template <typename T>
class Network {
 public:
  Network() = default;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  void add(std::unique_ptr<Layer<T>> layer);

  /// Returns logits.
  DenseTensor<T> forward(const DenseTensor<T>& x, Phase phase);
  void backward(const DenseTensor<T>& dlogits);

  std::vector<ParamRef<T>> parameters();
  /// Parameters followed by buffers, in layer order.
  std::vector<ParamRef<T>> state();
  std::size_t trainable_param_count();

  /// Verifies the shape chain for an input shape and returns the logit shape.
  Shape check_shapes(const Shape& input) const;
  /// Per-layer output shapes for an input shape.
  std::vector<Shape> shape_trace(const Shape& input) const;

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// How one conv layer of the reference architecture is parameterized.
struct LayerCompression {
  bool compressed = false;
  TopologyKind kind = TopologyKind::TT;
  std::vector<std::size_t> ranks;
  bool shuffled = false;
  std::optional<std::uint64_t> seed;  // permutation seed override
  ModeGrouping grouping = default_tt_matrix_grouping();

  static LayerCompression none() { return {}; }
  static LayerCompression td(TopologyKind kind, std::vector<std::size_t> ranks) {
    LayerCompression c;
    c.compressed = true;
    c.kind = kind;
    c.ranks = std::move(ranks);
    return c;
  }
  static LayerCompression rstd(TopologyKind kind, std::vector<std::size_t> ranks,
                               std::optional<std::uint64_t> seed = std::nullopt) {
    auto c = td(kind, std::move(ranks));
    c.shuffled = true;
    c.seed = seed;
    return c;
  }
};

/// Ranks for a uniform-rank preset: 3 for TT, 4 for TR, groups-1 for TT-matrix.
std::vector<std::size_t> uniform_ranks(TopologyKind kind, std::size_t rank,
                                       const ModeGrouping& grouping = default_tt_matrix_grouping());

inline constexpr std::size_t kTable1ConvLayers = 7;
inline constexpr std::size_t kTable1Strides[kTable1ConvLayers] = {1, 1, 2, 1, 1, 2, 1};

struct Table1Options {
  std::size_t channels = 256;
  std::size_t in_channels = 3;
  std::size_t num_classes = 10;
  /// Conv layers carry a bias of their own; batch norm already supplies a
  /// per-channel shift, so this is off for the reference network.
  bool conv_bias = false;
  /// Seed of this repetition: drives weight init and default permutations.
  std::uint64_t seed = 0;
  /// One entry per conv layer (7), or empty for the uncompressed network.
  std::vector<LayerCompression> layers;
};

/**
 * Seven 3x3 convs (strides 1,1,2,1,1,2,1, padding 1) each followed by batch
 * norm and ReLU, then global average pooling and a fully connected layer to
 * the class logits. Conv layers are named conv1..conv7; layers 2..7 may be
 * factorized.
 */
template <typename T>
Network<T> build_table1_network(const Table1Options& options);

}  // namespace rstd
