#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rstd/rng.hpp"
#include "rstd/tensor.hpp"

namespace rstd {

class TopologyError : public Error {
 public:
  using Error::Error;
};

enum class TopologyKind { TT, TTMatrix, TR, Custom };

std::string_view to_string(TopologyKind kind);
TopologyKind parse_topology_kind(std::string_view name);

/// Global mode ids of a convolution kernel, stored in this order.
enum KernelMode : std::size_t { kModeIn = 0, kModeHeight = 1, kModeWidth = 2, kModeOut = 3 };

struct KernelDims {
  std::size_t in = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t out = 1;

  Shape shape() const { return {in, height, width, out}; }
  std::size_t size() const { return in * height * width * out; }
};

struct FreeMode {
  std::size_t mode;  // global mode id
  std::size_t dim;
};

/// A mode of a core: either a bond to another core or one of the free modes.
struct ModeLabel {
  bool is_bond;
  std::size_t a;  // bond: lower core index; free: global mode id
  std::size_t b;  // bond: higher core index; free: unused
  bool operator==(const ModeLabel&) const = default;
};

/**
 * Tensor-network topology of a decomposed tensor.
 *
 * `adjacency(i, j)` holds the bond rank between cores i and j (0 = no edge),
 * so the matrix doubles as the rank table. Each global mode belongs to
 * exactly one core.
 *
 * Core i stores its modes as: bonds to lower-indexed neighbours (ascending),
 * then its free modes in the listed order, then bonds to higher-indexed
 * neighbours (ascending). For TT on (I,H,W,O) this gives the usual
 * [I,r1], [r1,H,r2], [r2,W,r3], [r3,O]; for TR the first core becomes
 * [I,r01,r03] and the last [r03,r23,O].
 */
class TDTopology {
 public:
  TDTopology(TopologyKind kind, std::vector<std::vector<std::size_t>> adjacency,
             std::vector<std::vector<FreeMode>> free_modes);

  TopologyKind kind() const { return kind_; }
  std::size_t n_cores() const { return adjacency_.size(); }
  std::size_t rank(std::size_t i, std::size_t j) const { return adjacency_.at(i).at(j); }
  const std::vector<std::vector<std::size_t>>& adjacency() const { return adjacency_; }
  const std::vector<FreeMode>& free_modes(std::size_t core) const { return free_modes_.at(core); }

  /// Dimensions of the reconstructed tensor, indexed by global mode id.
  const Shape& mode_dims() const { return mode_dims_; }
  const std::vector<ModeLabel>& core_layout(std::size_t core) const { return layouts_.at(core); }
  Shape core_shape(std::size_t core) const;
  std::vector<Shape> core_shapes() const;
  /// All bond ranks, in (i<j) row-major order over the adjacency matrix.
  std::vector<std::size_t> bond_ranks() const;

 private:
  TopologyKind kind_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<std::vector<FreeMode>> free_modes_;
  std::vector<std::vector<ModeLabel>> layouts_;
  Shape mode_dims_;
};

template <typename T>
using CoreSet = std::vector<DenseTensor<T>>;

/// Free-mode grouping for TT-matrix; each group becomes one core of a chain.
using ModeGrouping = std::vector<std::vector<std::size_t>>;
ModeGrouping default_tt_matrix_grouping();

/**
 * Preset topologies over a (I,H,W,O) kernel.
 *
 * TT takes 3 ranks, TR 4 (the last one closes the ring between the first and
 * last core), TT-matrix one rank per link between consecutive groups.
 */
TDTopology build_topology(TopologyKind kind, const KernelDims& dims,
                          std::span<const std::size_t> ranks,
                          const ModeGrouping& tt_matrix_grouping = default_tt_matrix_grouping());

/// Single core holding the whole kernel.
TDTopology dense_topology(const KernelDims& dims);

/// Throws TopologyError unless every core has the shape the topology implies.
template <typename T>
void check_cores(const TDTopology& topology, const CoreSet<T>& cores);

/// Contracts all cores; the result is ordered by global mode id.
template <typename T>
DenseTensor<T> reconstruct(const TDTopology& topology, const CoreSet<T>& cores);

/// d<upstream, reconstruct(cores)>/d core_i for every core.
template <typename T>
CoreSet<T> reconstruct_gradient(const TDTopology& topology, const CoreSet<T>& cores,
                                const DenseTensor<T>& upstream);

std::size_t param_count(const TDTopology& topology);

double compression_ratio(std::size_t n_compressed, std::size_t n_uncompressed);

/**
 * Gaussian cores whose reconstruction has element variance `target_variance`:
 * every core uses std (target_variance / prod(bond ranks))^(1 / (2N)).
 */
template <typename T>
CoreSet<T> init_cores(const TDTopology& topology, double target_variance, Rng& rng);

/// He variance 2 / (H*W*I) of a conv kernel.
double he_variance(const KernelDims& dims);

/**
 * TT-SVD: sequential matricization and SVD of a 4th-order kernel, truncated
 * to at most `max_rank` per bond (0 = no truncation, exact reconstruction).
 */
struct TTFactorization {
  TDTopology topology;
  CoreSet<double> cores;
};
TTFactorization tt_svd(const DenseTensor<double>& kernel, std::size_t max_rank = 0);

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/**
 * Two-step forward of a rank-1 TR kernel (no bias): convolve X with the
 * single-channel kernel merged from the I, H and W cores, then scale that
 * latent map by the O core for every output channel.
 */
template <typename T>
DenseTensor<T> rank1_tr_split_forward(const TDTopology& topology, const CoreSet<T>& cores,
                                      const DenseTensor<T>& x, ConvGeometry geometry);

}  // namespace rstd
