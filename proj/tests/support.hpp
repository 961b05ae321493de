#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rstd/data.hpp"
#include "rstd/nn.hpp"
#include "rstd/rng.hpp"
#include "rstd/tdmodel.hpp"
#include "rstd/tensor.hpp"

namespace rstd::testing {

/// Fresh directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "rstd") {
    std::random_device rd;
    for (int attempt = 0; attempt < 100; ++attempt) {
      path_ = std::filesystem::temp_directory_path() /
              (tag + "_" + std::to_string(rd()) + "_" + std::to_string(attempt));
      if (std::filesystem::create_directory(path_)) return;
    }
    throw Error("cannot create a temporary directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& name = "") const { return name.empty() ? path_.string() : (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/**
 * Writes a CIFAR-format directory whose classes are separable: each class has
 * a fixed random colour template, each image is the template plus pixel noise
 * and a random brightness offset.
 */
inline void write_synthetic_cifar(const std::filesystem::path& dir, std::size_t per_train_file,
                                  std::size_t test_count, std::uint64_t seed,
                                  double pixel_noise = 40.0) {
  std::filesystem::create_directories(dir);
  Rng rng(seed);
  std::vector<std::vector<double>> templates(kCifarClasses, std::vector<double>(kCifarPixels));
  for (auto& t : templates) {
    // Coarse 4x4 blocks per channel so convolutions see spatial structure.
    std::vector<double> blocks(kCifarChannels * 16);
    for (auto& b : blocks) b = 40.0 + 175.0 * rng.uniform01();
    for (std::size_t c = 0; c < kCifarChannels; ++c) {
      for (std::size_t y = 0; y < kCifarSide; ++y) {
        for (std::size_t x = 0; x < kCifarSide; ++x) {
          t[(c * kCifarSide + y) * kCifarSide + x] = blocks[c * 16 + (y / 8) * 4 + x / 8];
        }
      }
    }
  }
  auto write_file = [&](const std::string& name, std::size_t count) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(count * kCifarRecordBytes);
    for (std::size_t n = 0; n < count; ++n) {
      const auto label = static_cast<std::uint8_t>(rng.uniform_int(kCifarClasses - 1));
      bytes.push_back(label);
      const double shift = 30.0 * (rng.uniform01() - 0.5);
      for (std::size_t p = 0; p < kCifarPixels; ++p) {
        const double v = templates[label][p] + shift + pixel_noise * rng.normal();
        bytes.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
      }
    }
    std::ofstream out(dir / name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  };
  for (const auto& name : cifar10_train_files()) write_file(name, per_train_file);
  write_file(cifar10_test_file(), test_count);
}

template <typename T>
DenseTensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<T> v(shape_product(shape));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return DenseTensor<T>(shape, std::move(v));
}

/**
 * Reference reconstruction by explicit enumeration: every element of the
 * full tensor is the sum over all bond-index assignments of the product of
 * the addressed core entries.
 */
inline DenseTensor<double> brute_force_reconstruct(const TDTopology& topo, const CoreSet<double>& cores) {
  struct Bond {
    std::size_t a, b, rank;
  };
  std::vector<Bond> bonds;
  for (std::size_t i = 0; i < topo.n_cores(); ++i) {
    for (std::size_t j = i + 1; j < topo.n_cores(); ++j) {
      if (topo.rank(i, j) > 0) bonds.push_back({i, j, topo.rank(i, j)});
    }
  }
  auto bond_slot = [&](std::size_t a, std::size_t b) {
    for (std::size_t k = 0; k < bonds.size(); ++k) {
      if (bonds[k].a == a && bonds[k].b == b) return k;
    }
    throw Error("missing bond");
  };
  const auto& dims = topo.mode_dims();
  auto out = DenseTensor<double>::zeros(dims);
  std::vector<std::size_t> free_idx(dims.size(), 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t rem = flat;
    for (std::size_t m = dims.size(); m-- > 0;) {
      free_idx[m] = rem % dims[m];
      rem /= dims[m];
    }
    std::vector<std::size_t> bond_idx(bonds.size(), 0);
    double sum = 0.0;
    while (true) {
      double prod = 1.0;
      for (std::size_t c = 0; c < topo.n_cores(); ++c) {
        std::vector<std::size_t> idx;
        for (const auto& label : topo.core_layout(c)) {
          idx.push_back(label.is_bond ? bond_idx[bond_slot(label.a, label.b)] : free_idx[label.a]);
        }
        prod *= cores[c].at(idx);
      }
      sum += prod;
      std::size_t k = 0;
      for (; k < bonds.size(); ++k) {
        if (++bond_idx[k] < bonds[k].rank) break;
        bond_idx[k] = 0;
      }
      if (k == bonds.size()) break;
    }
    out[flat] = sum;
  }
  return out;
}

/// A random TT, TT-matrix or TR topology over a kernel with dims <= max_dim and ranks <= max_rank.
inline TDTopology random_topology(Rng& rng, std::size_t max_dim = 4, std::size_t max_rank = 3) {
  KernelDims d{1 + rng.uniform_int(max_dim - 1), 1 + rng.uniform_int(max_dim - 1),
               1 + rng.uniform_int(max_dim - 1), 1 + rng.uniform_int(max_dim - 1)};
  auto r = [&] { return static_cast<std::size_t>(1 + rng.uniform_int(max_rank - 1)); };
  switch (rng.uniform_int(2)) {
    case 0:
      return build_topology(TopologyKind::TT, d, std::vector<std::size_t>{r(), r(), r()});
    case 1: {
      static const std::vector<ModeGrouping> groupings{
          {{kModeIn, kModeHeight}, {kModeWidth, kModeOut}},
          {{kModeIn}, {kModeHeight, kModeWidth}, {kModeOut}},
          {{kModeIn, kModeOut}, {kModeHeight, kModeWidth}}};
      const auto& g = groupings[rng.uniform_int(groupings.size() - 1)];
      std::vector<std::size_t> ranks;
      for (std::size_t k = 0; k + 1 < g.size(); ++k) ranks.push_back(r());
      return build_topology(TopologyKind::TTMatrix, d, ranks, g);
    }
    default:
      return build_topology(TopologyKind::TR, d, std::vector<std::size_t>{r(), r(), r(), r()});
  }
}

inline CoreSet<double> random_cores(const TDTopology& topo, Rng& rng) {
  CoreSet<double> cores;
  for (const auto& s : topo.core_shapes()) cores.push_back(random_tensor<double>(s, rng));
  return cores;
}

/// Largest abs difference over the largest abs reference value (floored at 1e-12).
inline double relative_error(std::span<const double> got, std::span<const double> want) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    diff = std::max(diff, std::abs(got[i] - want[i]));
    scale = std::max(scale, std::abs(want[i]));
  }
  return diff / std::max(scale, 1e-12);
}

/// Central-difference gradient of `f` with respect to every entry of `param`.
inline std::vector<double> numeric_gradient(DenseTensor<double>& param, const std::function<double()>& f,
                                            double h = 1e-5) {
  std::vector<double> g(param.size());
  auto data = param.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + h;
    const double up = f();
    data[i] = saved - h;
    const double down = f();
    data[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double dot(const DenseTensor<double>& a, const DenseTensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace rstd::testing
