#include <doctest.h>

#include <cmath>
#include <vector>

#include "rstd/nn.hpp"
#include "rstd/tdmodel.hpp"
#include "support.hpp"

using namespace rstd;

namespace {

const std::vector<std::size_t> kRanks2{2, 2, 2};

}  // namespace

TEST_CASE("TT core layout on (4,3,3,4) with ranks 2") {
  const auto topo = build_topology(TopologyKind::TT, {4, 3, 3, 4}, kRanks2);
  CHECK(topo.n_cores() == 4);
  CHECK(topo.core_shape(0) == Shape{4, 2});
  CHECK(topo.core_shape(1) == Shape{2, 3, 2});
  CHECK(topo.core_shape(2) == Shape{2, 3, 2});
  CHECK(topo.core_shape(3) == Shape{2, 4});
  CHECK(param_count(topo) == 40);
  CHECK(topo.rank(1, 2) == 2);
  CHECK(topo.rank(0, 2) == 0);
}

TEST_CASE("TR closes the ring between the first and last core") {
  const std::vector<std::size_t> ranks{2, 3, 4, 5};
  const auto topo = build_topology(TopologyKind::TR, {3, 3, 3, 6}, ranks);
  CHECK(topo.core_shape(0) == Shape{3, 2, 5});
  CHECK(topo.core_shape(1) == Shape{2, 3, 3});
  CHECK(topo.core_shape(3) == Shape{5, 4, 6});
  CHECK(topo.rank(0, 3) == 5);
}

TEST_CASE("rank-1 TR on a 3x3x256x256 kernel has 518 parameters") {
  const std::vector<std::size_t> ones{1, 1, 1, 1};
  CHECK(param_count(build_topology(TopologyKind::TR, {256, 3, 3, 256}, ones)) == 518);
}

TEST_CASE("TT-matrix with the default grouping") {
  const std::vector<std::size_t> r{5};
  const auto topo = build_topology(TopologyKind::TTMatrix, {4, 3, 3, 8}, r);
  CHECK(topo.n_cores() == 2);
  CHECK(topo.core_shape(0) == Shape{4, 3, 5});
  CHECK(topo.core_shape(1) == Shape{5, 3, 8});
}

TEST_CASE("topology validation") {
  using Adj = std::vector<std::vector<std::size_t>>;
  using Free = std::vector<std::vector<FreeMode>>;
  const Free two{{{0, 2}}, {{1, 2}}};
  CHECK_THROWS_AS(TDTopology(TopologyKind::Custom, Adj{{0, 1}, {2, 0}}, two), TopologyError);  // asymmetric
  CHECK_THROWS_AS(TDTopology(TopologyKind::Custom, Adj{{1, 1}, {1, 0}}, two), TopologyError);  // diagonal
  CHECK_THROWS_AS(TDTopology(TopologyKind::Custom, Adj{{0, 0}, {0, 0}}, two), TopologyError);  // disconnected
  CHECK_THROWS_AS(TDTopology(TopologyKind::Custom, Adj{{0, 1}, {1, 0}}, Free{{{0, 2}}, {{0, 2}}}),
                  TopologyError);  // mode twice
  CHECK_THROWS_AS(TDTopology(TopologyKind::Custom, Adj{{0, 1}, {1, 0}}, Free{{{0, 2}}, {{2, 2}}}),
                  TopologyError);  // mode 1 missing
  CHECK_NOTHROW(TDTopology(TopologyKind::Custom, Adj{{0, 3}, {3, 0}}, two));
  const std::vector<std::size_t> three{1, 1, 1}, zero{1, 0, 1};
  CHECK_THROWS_AS(build_topology(TopologyKind::TR, {2, 2, 2, 2}, three), TopologyError);
  CHECK_THROWS_AS(build_topology(TopologyKind::TT, {2, 2, 2, 2}, zero), TopologyError);
  CHECK_THROWS_AS(parse_topology_kind("TX"), TopologyError);
  CHECK(parse_topology_kind("TT-matrix") == TopologyKind::TTMatrix);
}

TEST_CASE("core shape mismatch is reported") {
  const auto topo = build_topology(TopologyKind::TT, {4, 3, 3, 4}, kRanks2);
  Rng rng(1);
  auto cores = testing::random_cores(topo, rng);
  cores[1] = DenseTensor<double>::zeros({2, 3, 3});
  CHECK_THROWS_AS(reconstruct(topo, cores), TopologyError);
  cores.pop_back();
  CHECK_THROWS_AS(check_cores(topo, cores), TopologyError);
}

TEST_CASE("reconstruction of a rank-1 TT is the outer product") {
  const std::vector<std::size_t> ones{1, 1, 1};
  const auto topo = build_topology(TopologyKind::TT, {2, 1, 1, 3}, ones);
  CoreSet<double> cores{DenseTensor<double>({2, 1}, {1, 2}), DenseTensor<double>({1, 1, 1}, {3}),
                        DenseTensor<double>({1, 1, 1}, {0.5}), DenseTensor<double>({1, 3}, {1, 10, 100})};
  const auto w = reconstruct(topo, cores);
  CHECK(w.shape() == Shape{2, 1, 1, 3});
  CHECK(w.at({1, 0, 0, 2}) == doctest::Approx(300.0));
  CHECK(w.at({0, 0, 0, 1}) == doctest::Approx(15.0));
}

TEST_CASE("reconstruction matches enumeration on random topologies") {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const auto topo = testing::random_topology(rng);
    const auto cores = testing::random_cores(topo, rng);
    const auto got = reconstruct(topo, cores);
    const auto want = testing::brute_force_reconstruct(topo, cores);
    REQUIRE(got.shape() == want.shape());
    CHECK(testing::relative_error(got.data(), want.data()) < 1e-12);
  }
}

TEST_CASE("reconstruction gradient matches finite differences") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const auto topo = testing::random_topology(rng, 3, 3);
    auto cores = testing::random_cores(topo, rng);
    const auto upstream = testing::random_tensor<double>(topo.mode_dims(), rng);
    const auto grads = reconstruct_gradient(topo, cores, upstream);
    REQUIRE(grads.size() == cores.size());
    for (std::size_t i = 0; i < cores.size(); ++i) {
      REQUIRE(grads[i].shape() == cores[i].shape());
      const auto numeric = testing::numeric_gradient(
          cores[i], [&] { return testing::dot(upstream, reconstruct(topo, cores)); });
      CHECK(testing::relative_error(grads[i].data(), numeric) < 1e-7);
    }
  }
}

TEST_CASE("initialization hits the target element variance") {
  const std::vector<std::size_t> r{4, 4, 4};
  const KernelDims d{16, 3, 3, 16};
  const auto topo = build_topology(TopologyKind::TT, d, r);
  const double target = he_variance(d);
  CHECK(target == doctest::Approx(2.0 / 144.0));
  double acc = 0.0;
  const int draws = 40;
  for (int s = 0; s < draws; ++s) {
    Rng rng(static_cast<std::uint64_t>(s));
    const auto w = reconstruct(topo, init_cores<double>(topo, target, rng));
    double sq = 0.0;
    for (auto v : w.data()) sq += v * v;
    acc += sq / static_cast<double>(w.size());
  }
  CHECK(acc / draws == doctest::Approx(target).epsilon(0.15));
}

TEST_CASE("TT-SVD without truncation reconstructs exactly") {
  Rng rng(9);
  const auto w = testing::random_tensor<double>({3, 3, 2, 4}, rng);
  const auto f = tt_svd(w, 0);
  CHECK(max_abs_diff(reconstruct(f.topology, f.cores), w) < 1e-12);
  const auto truncated = tt_svd(w, 1);
  CHECK(param_count(truncated.topology) < param_count(f.topology));
  CHECK(max_abs_diff(reconstruct(truncated.topology, truncated.cores), w) > 1e-3);
}

TEST_CASE("compression ratio") {
  CHECK(compression_ratio(50, 200) == 0.25);
  CHECK_THROWS_AS(compression_ratio(1, 0), Error);
}

TEST_CASE("rank-1 TR split path equals reconstruct-then-convolve") {
  Rng rng(31);
  const std::vector<std::size_t> ones{1, 1, 1, 1};
  const auto topo = build_topology(TopologyKind::TR, {3, 3, 3, 5}, ones);
  const auto cores = testing::random_cores(topo, rng);
  const auto x = testing::random_tensor<double>({2, 3, 6, 6}, rng);
  const ConvGeometry g{1, 1};
  const auto split = rank1_tr_split_forward(topo, cores, x, g);
  const auto direct = conv2d_forward(x, reconstruct(topo, cores), std::span<const double>{}, g);
  CHECK(max_abs_diff(split, direct) < 1e-10);
  const std::vector<std::size_t> twos{2, 1, 1, 1};
  const auto wide = build_topology(TopologyKind::TR, {3, 3, 3, 5}, twos);
  CHECK_THROWS_AS(rank1_tr_split_forward(wide, testing::random_cores(wide, rng), x, g), TopologyError);
}
