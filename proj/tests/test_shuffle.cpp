#include <doctest.h>

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <vector>

#include "rstd/shuffle.hpp"
#include "support.hpp"

using namespace rstd;

namespace {

/// Replays a fixed list of draws.
struct ScriptedDraws {
  std::deque<std::uint64_t> draws;
  std::vector<std::uint64_t> uppers;
  std::uint64_t uniform_int(std::uint64_t upper) {
    uppers.push_back(upper);
    const auto j = draws.front();
    draws.pop_front();
    return j;
  }
};

}  // namespace

TEST_CASE("Durstenfeld loop with scripted draws") {
  // i=2 draws j=0: [2,1,0]; i=1 draws j=0: [1,2,0]
  ScriptedDraws src{{0, 0}, {}};
  const auto p = fisher_yates_permutation(3, src);
  CHECK(std::vector<std::uint64_t>(p.forward().begin(), p.forward().end()) == std::vector<std::uint64_t>{1, 2, 0});
  CHECK(src.uppers == std::vector<std::uint64_t>{2, 1});
}

TEST_CASE("n = 1 draws nothing and yields the identity") {
  ScriptedDraws src{{}, {}};
  const auto p = fisher_yates_permutation(1, src);
  CHECK(p.is_identity());
  CHECK(src.uppers.empty());
}

TEST_CASE("shuffle moves element k to forward[k]") {
  const Permutation p({2, 0, 3, 1});
  DenseTensor<double> t({4}, {'a', 'b', 'c', 'd'});
  const auto s = apply_shuffle(p, t);
  CHECK(s.values() == std::vector<double>{'b', 'd', 'a', 'c'});
  CHECK(apply_inverse_shuffle(p, s) == t);
}

TEST_CASE("identity permutation leaves the tensor unchanged") {
  Rng rng(1);
  const auto t = testing::random_tensor<double>({2, 3, 2}, rng);
  CHECK(apply_shuffle(Permutation::identity(t.size()), t) == t);
}

TEST_CASE("non-bijections are rejected") {
  CHECK_THROWS_AS(Permutation({0, 0, 1}), ParseError);
  CHECK_THROWS_AS(Permutation({0, 3, 1}), ParseError);
  CHECK_THROWS_AS(Permutation(std::vector<std::uint64_t>{}), ParseError);
}

TEST_CASE("size mismatch between permutation and tensor") {
  DenseTensor<double> t({5}, {1, 2, 3, 4, 5});
  CHECK_THROWS_AS(apply_shuffle(Permutation::identity(4), t), TensorError);
}

TEST_CASE("seeded permutations are reproducible and seed-dependent") {
  const auto a = Permutation::from_seed(1000, 42);
  const auto b = Permutation::from_seed(1000, 42);
  const auto c = Permutation::from_seed(1000, 43);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.seed() == 42u);
}

TEST_CASE("forward and inverse compose to the identity") {
  const auto p = Permutation::from_seed(5000, 7);
  for (std::size_t k = 0; k < p.size(); ++k) {
    REQUIRE(p.inverse()[p.forward()[k]] == k);
    REQUIRE(p.forward()[p.inverse()[k]] == k);
  }
}

TEST_CASE("permutation file round trip") {
  const auto p = Permutation::from_seed(37, 9);
  const auto bytes = serialize_permutation(p);
  CHECK(bytes.size() == 4 + 2 + 8 + 37 * 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RSPM");
  CHECK(parse_permutation(bytes) == p);

  testing::TempDir dir;
  save_permutation(p, dir.str("p.rspm"));
  CHECK(load_permutation(dir.str("p.rspm")) == p);
}

TEST_CASE("permutation parse errors") {
  const auto good = serialize_permutation(Permutation::from_seed(8, 1));
  SUBCASE("bad magic") {
    auto b = good;
    b[0] = 'X';
    CHECK_THROWS_AS(parse_permutation(b), ParseError);
  }
  SUBCASE("bad version") {
    auto b = good;
    b[4] = 2;
    CHECK_THROWS_AS(parse_permutation(b), ParseError);
  }
  SUBCASE("truncated") {
    auto b = good;
    b.resize(b.size() - 3);
    CHECK_THROWS_WITH_AS(parse_permutation(b), doctest::Contains("offset"), ParseError);
  }
  SUBCASE("not a bijection") {
    auto b = good;
    // overwrite the second index with the first
    std::copy(b.begin() + 14, b.begin() + 22, b.begin() + 22);
    CHECK_THROWS_AS(parse_permutation(b), ParseError);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.push_back(0);
    CHECK_THROWS_AS(parse_permutation(b), ParseError);
  }
}

TEST_CASE("rejection sampling stays in range and hits every value") {
  Rng rng(11);
  std::map<std::uint64_t, int> seen;
  for (int i = 0; i < 6000; ++i) {
    const auto v = rng.uniform_int(5);
    REQUIRE(v <= 5);
    ++seen[v];
  }
  CHECK(seen.size() == 6);
  for (const auto& [v, count] : seen) CHECK(count > 800);
}
