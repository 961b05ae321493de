#include "rstd/tdmodel.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include <Eigen/SVD>

#include "gemm.hpp"

namespace rstd {

std::string_view to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::TT:
      return "TT";
    case TopologyKind::TTMatrix:
      return "TT-matrix";
    case TopologyKind::TR:
      return "TR";
    case TopologyKind::Custom:
      return "custom";
  }
  return "?";
}

TopologyKind parse_topology_kind(std::string_view name) {
  if (name == "TT") return TopologyKind::TT;
  if (name == "TT-matrix") return TopologyKind::TTMatrix;
  if (name == "TR") return TopologyKind::TR;
  if (name == "custom") return TopologyKind::Custom;
  throw TopologyError("unknown decomposition kind '" + std::string(name) +
                      "' (expected TT, TT-matrix or TR)");
}

namespace {

bool is_chain(const std::vector<std::vector<std::size_t>>& adj, bool closed) {
  const auto n = adj.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool edge = j == i + 1 || (closed && i == 0 && j == n - 1);
      if ((adj[i][j] > 0) != edge) return false;
    }
  }
  return true;
}

}  // namespace

TDTopology::TDTopology(TopologyKind kind, std::vector<std::vector<std::size_t>> adjacency,
                       std::vector<std::vector<FreeMode>> free_modes)
    : kind_(kind), adjacency_(std::move(adjacency)), free_modes_(std::move(free_modes)) {
  const auto n = adjacency_.size();
  if (n == 0) throw TopologyError("topology needs at least one core");
  if (free_modes_.size() != n) {
    throw TopologyError("free-mode list covers " + std::to_string(free_modes_.size()) +
                        " cores, adjacency has " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (adjacency_[i].size() != n) throw TopologyError("adjacency matrix is not square");
    if (adjacency_[i][i] != 0) throw TopologyError("adjacency diagonal must be zero");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (adjacency_[i][j] != adjacency_[j][i]) {
        throw TopologyError("adjacency not symmetric at (" + std::to_string(i) + "," +
                            std::to_string(j) + ")");
      }
    }
  }

  std::size_t n_modes = 0;
  for (const auto& fm : free_modes_) n_modes += fm.size();
  if (n_modes == 0) throw TopologyError("topology has no free modes");
  mode_dims_.assign(n_modes, 0);
  for (const auto& fm : free_modes_) {
    for (const auto& m : fm) {
      if (m.mode >= n_modes) {
        throw TopologyError("free mode id " + std::to_string(m.mode) + " out of range 0.." +
                            std::to_string(n_modes - 1));
      }
      if (m.dim == 0) throw TopologyError("free mode dimension must be >= 1");
      if (mode_dims_[m.mode] != 0) {
        throw TopologyError("mode " + std::to_string(m.mode) + " assigned to more than one core");
      }
      mode_dims_[m.mode] = m.dim;
    }
  }

  // Connectivity.
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  while (!frontier.empty()) {
    const auto i = frontier.front();
    frontier.pop();
    for (std::size_t j = 0; j < n; ++j) {
      if (adjacency_[i][j] > 0 && !seen[j]) {
        seen[j] = true;
        frontier.push(j);
      }
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw TopologyError("topology graph is not connected");
  }

  switch (kind_) {
    case TopologyKind::TT:
    case TopologyKind::TTMatrix:
      if (!is_chain(adjacency_, false)) {
        throw TopologyError(std::string(to_string(kind_)) + " adjacency must be a chain");
      }
      break;
    case TopologyKind::TR:
      if (n < 3 || !is_chain(adjacency_, true)) {
        throw TopologyError("TR adjacency must be a closed ring of >= 3 cores");
      }
      break;
    case TopologyKind::Custom:
      break;
  }

  layouts_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& layout = layouts_[i];
    for (std::size_t j = 0; j < i; ++j) {
      if (adjacency_[i][j] > 0) layout.push_back({true, j, i});
    }
    for (const auto& m : free_modes_[i]) layout.push_back({false, m.mode, 0});
    for (std::size_t j = i + 1; j < n; ++j) {
      if (adjacency_[i][j] > 0) layout.push_back({true, i, j});
    }
    if (layout.empty()) {
      throw TopologyError("core " + std::to_string(i) + " has neither bonds nor free modes");
    }
  }
}

Shape TDTopology::core_shape(std::size_t core) const {
  Shape s;
  for (const auto& l : core_layout(core)) {
    s.push_back(l.is_bond ? adjacency_[l.a][l.b] : mode_dims_[l.a]);
  }
  return s;
}

std::vector<Shape> TDTopology::core_shapes() const {
  std::vector<Shape> out;
  for (std::size_t i = 0; i < n_cores(); ++i) out.push_back(core_shape(i));
  return out;
}

std::vector<std::size_t> TDTopology::bond_ranks() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n_cores(); ++i) {
    for (std::size_t j = i + 1; j < n_cores(); ++j) {
      if (adjacency_[i][j] > 0) out.push_back(adjacency_[i][j]);
    }
  }
  return out;
}

ModeGrouping default_tt_matrix_grouping() { return {{kModeIn, kModeHeight}, {kModeWidth, kModeOut}}; }

TDTopology build_topology(TopologyKind kind, const KernelDims& dims,
                          std::span<const std::size_t> ranks, const ModeGrouping& grouping) {
  const Shape mode_dims = dims.shape();
  for (auto d : mode_dims) {
    if (d == 0) throw TopologyError("kernel dimensions must be >= 1");
  }
  for (auto r : ranks) {
    if (r == 0) throw TopologyError("bond ranks must be >= 1");
  }

  std::vector<std::vector<FreeMode>> free_modes;
  switch (kind) {
    case TopologyKind::TT:
    case TopologyKind::TR:
      for (std::size_t m = 0; m < 4; ++m) free_modes.push_back({{m, mode_dims[m]}});
      break;
    case TopologyKind::TTMatrix:
      if (grouping.size() < 2) throw TopologyError("TT-matrix grouping needs at least 2 groups");
      for (const auto& group : grouping) {
        std::vector<FreeMode> fm;
        for (auto m : group) {
          if (m >= 4) throw TopologyError("TT-matrix grouping names mode " + std::to_string(m));
          fm.push_back({m, mode_dims[m]});
        }
        free_modes.push_back(std::move(fm));
      }
      break;
    case TopologyKind::Custom:
      throw TopologyError("custom topologies are built with the TDTopology constructor");
  }

  const auto n = free_modes.size();
  const std::size_t expected = kind == TopologyKind::TR ? n : n - 1;
  if (ranks.size() != expected) {
    throw TopologyError(std::string(to_string(kind)) + " expects " + std::to_string(expected) +
                        " ranks, got " + std::to_string(ranks.size()));
  }
  std::vector<std::vector<std::size_t>> adj(n, std::vector<std::size_t>(n, 0));
  for (std::size_t i = 0; i + 1 < n; ++i) adj[i][i + 1] = adj[i + 1][i] = ranks[i];
  if (kind == TopologyKind::TR) adj[0][n - 1] = adj[n - 1][0] = ranks[n - 1];
  return TDTopology(kind, std::move(adj), std::move(free_modes));
}

TDTopology dense_topology(const KernelDims& dims) {
  const Shape s = dims.shape();
  std::vector<FreeMode> fm;
  for (std::size_t m = 0; m < 4; ++m) fm.push_back({m, s[m]});
  return TDTopology(TopologyKind::Custom, {{0}}, {fm});
}

template <typename T>
void check_cores(const TDTopology& topology, const CoreSet<T>& cores) {
  if (cores.size() != topology.n_cores()) {
    throw TopologyError("expected " + std::to_string(topology.n_cores()) + " cores, got " +
                        std::to_string(cores.size()));
  }
  for (std::size_t i = 0; i < cores.size(); ++i) {
    const auto expected = topology.core_shape(i);
    if (cores[i].shape() != expected) {
      throw TopologyError("core " + std::to_string(i) + " has shape " +
                          shape_to_string(cores[i].shape()) + ", topology requires " +
                          shape_to_string(expected));
    }
  }
}

namespace {

// A tensor whose modes carry network labels. No labels means a scalar held
// in a shape-[1] tensor.
template <typename T>
struct Labeled {
  DenseTensor<T> tensor;
  std::vector<ModeLabel> labels;
};

template <typename T>
Labeled<T> join(const Labeled<T>& a, const Labeled<T>& b) {
  if (a.labels.empty()) return {a.tensor[0] * b.tensor, b.labels};
  if (b.labels.empty()) return {b.tensor[0] * a.tensor, a.labels};
  std::vector<std::size_t> modes_a;
  std::vector<std::size_t> modes_b;
  std::vector<ModeLabel> labels;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const auto it = std::find(b.labels.begin(), b.labels.end(), a.labels[i]);
    if (it == b.labels.end()) {
      labels.push_back(a.labels[i]);
    } else {
      modes_a.push_back(i);
      modes_b.push_back(static_cast<std::size_t>(it - b.labels.begin()));
    }
  }
  for (std::size_t j = 0; j < b.labels.size(); ++j) {
    if (std::find(modes_b.begin(), modes_b.end(), j) == modes_b.end()) labels.push_back(b.labels[j]);
  }
  return {contract(a.tensor, b.tensor, modes_a, modes_b), std::move(labels)};
}

template <typename T>
DenseTensor<T> arrange(const Labeled<T>& x, const std::vector<ModeLabel>& target) {
  std::vector<std::size_t> perm;
  for (const auto& want : target) {
    const auto it = std::find(x.labels.begin(), x.labels.end(), want);
    perm.push_back(static_cast<std::size_t>(it - x.labels.begin()));
  }
  return permute_modes(x.tensor, perm);
}

std::vector<ModeLabel> free_labels(std::size_t n_modes) {
  std::vector<ModeLabel> out;
  for (std::size_t m = 0; m < n_modes; ++m) out.push_back({false, m, 0});
  return out;
}

}  // namespace

template <typename T>
DenseTensor<T> reconstruct(const TDTopology& topology, const CoreSet<T>& cores) {
  check_cores(topology, cores);
  // Left to right over core index; for a ring the closing bond is summed when
  // the last core is absorbed.
  Labeled<T> acc{cores[0], topology.core_layout(0)};
  for (std::size_t i = 1; i < cores.size(); ++i) {
    acc = join(acc, Labeled<T>{cores[i], topology.core_layout(i)});
  }
  return arrange(acc, free_labels(topology.mode_dims().size()));
}

template <typename T>
CoreSet<T> reconstruct_gradient(const TDTopology& topology, const CoreSet<T>& cores,
                                const DenseTensor<T>& upstream) {
  check_cores(topology, cores);
  if (upstream.shape() != topology.mode_dims()) {
    throw TopologyError("upstream gradient shape " + shape_to_string(upstream.shape()) +
                        " differs from reconstruction shape " +
                        shape_to_string(topology.mode_dims()));
  }
  const Labeled<T> up{upstream, free_labels(topology.mode_dims().size())};
  CoreSet<T> grads;
  grads.reserve(cores.size());
  for (std::size_t i = 0; i < cores.size(); ++i) {
    Labeled<T> env{DenseTensor<T>::filled({1}, T{1}), {}};
    for (std::size_t j = 0; j < cores.size(); ++j) {
      if (j != i) env = join(env, Labeled<T>{cores[j], topology.core_layout(j)});
    }
    grads.push_back(arrange(join(up, env), topology.core_layout(i)));
  }
  return grads;
}

std::size_t param_count(const TDTopology& topology) {
  std::size_t total = 0;
  for (const auto& s : topology.core_shapes()) total += shape_product(s);
  return total;
}

double compression_ratio(std::size_t n_compressed, std::size_t n_uncompressed) {
  if (n_uncompressed == 0) throw Error("compression_ratio: uncompressed parameter count is zero");
  return static_cast<double>(n_compressed) / static_cast<double>(n_uncompressed);
}

double he_variance(const KernelDims& dims) {
  return 2.0 / static_cast<double>(dims.height * dims.width * dims.in);
}

template <typename T>
CoreSet<T> init_cores(const TDTopology& topology, double target_variance, Rng& rng) {
  double bond_product = 1.0;
  for (auto r : topology.bond_ranks()) bond_product *= static_cast<double>(r);
  const double n = static_cast<double>(topology.n_cores());
  const double stddev = std::pow(target_variance / bond_product, 1.0 / (2.0 * n));
  CoreSet<T> cores;
  for (const auto& shape : topology.core_shapes()) {
    std::vector<T> v(shape_product(shape));
    for (auto& x : v) x = static_cast<T>(stddev * rng.normal());
    cores.emplace_back(shape, std::move(v));
  }
  return cores;
}

TTFactorization tt_svd(const DenseTensor<double>& kernel, std::size_t max_rank) {
  if (kernel.order() != 4) throw TopologyError("tt_svd expects a 4th-order tensor");
  const auto& dims = kernel.shape();
  std::vector<std::size_t> ranks;
  CoreSet<double> cores;
  detail::RowMatrix<double> carry = detail::view(kernel.data().data(), 1, kernel.size());
  std::size_t left_rank = 1;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t rows = left_rank * dims[k];
    const std::size_t cols = carry.size() / rows;
    const detail::RowMatrix<double> unfolded =
        detail::view(carry.data(), rows, cols);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(unfolded, Eigen::ComputeThinU | Eigen::ComputeThinV);
    std::size_t r = std::min(rows, cols);
    if (max_rank > 0) r = std::min(r, max_rank);
    const auto ri = static_cast<Eigen::Index>(r);
    const detail::RowMatrix<double> u = svd.matrixU().leftCols(ri);
    carry = svd.singularValues().head(ri).asDiagonal() * svd.matrixV().leftCols(ri).transpose();
    Shape shape = k == 0 ? Shape{dims[0], r} : Shape{left_rank, dims[k], r};
    cores.emplace_back(shape, std::vector<double>(u.data(), u.data() + u.size()));
    ranks.push_back(r);
    left_rank = r;
  }
  cores.emplace_back(Shape{left_rank, dims[3]},
                     std::vector<double>(carry.data(), carry.data() + carry.size()));
  auto topology = build_topology(TopologyKind::TT, {dims[0], dims[1], dims[2], dims[3]}, ranks);
  return {std::move(topology), std::move(cores)};
}

#define RSTD_INSTANTIATE(T)                                                                 \
  template void check_cores(const TDTopology&, const CoreSet<T>&);                          \
  template DenseTensor<T> reconstruct(const TDTopology&, const CoreSet<T>&);                \
  template CoreSet<T> reconstruct_gradient(const TDTopology&, const CoreSet<T>&,            \
                                           const DenseTensor<T>&);                          \
  template CoreSet<T> init_cores(const TDTopology&, double, Rng&);

RSTD_INSTANTIATE(float)
RSTD_INSTANTIATE(double)
#undef RSTD_INSTANTIATE

}  // namespace rstd
