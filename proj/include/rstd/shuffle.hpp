#pragma once

#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rstd/rng.hpp"
#include "rstd/tensor.hpp"

namespace rstd {

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Anything that yields a uniform integer on [0, upper].
template <typename R>
concept UniformIntSource = requires(R& r, std::uint64_t upper) {
  { r.uniform_int(upper) } -> std::convertible_to<std::uint64_t>;
};

/**
 * Bijection on the flat index space [0, n) of a tensor.
 *
 * Shuffling moves the element at flat index k to flat index forward[k].
 */
class Permutation {
 public:
  /// Validates that `forward` is a bijection; throws ParseError otherwise.
  explicit Permutation(std::vector<std::uint64_t> forward,
                       std::optional<std::uint64_t> seed = std::nullopt);

  static Permutation identity(std::size_t n);
  /// Durstenfeld shuffle driven by Rng(seed).
  static Permutation from_seed(std::size_t n, std::uint64_t seed);

  std::size_t size() const { return forward_.size(); }
  std::span<const std::uint64_t> forward() const { return forward_; }
  std::span<const std::uint64_t> inverse() const { return inverse_; }
  std::optional<std::uint64_t> seed() const { return seed_; }
  bool is_identity() const;

  bool operator==(const Permutation& other) const { return forward_ == other.forward_; }

 private:
  std::vector<std::uint64_t> forward_;
  std::vector<std::uint64_t> inverse_;
  std::optional<std::uint64_t> seed_;
};

/**
 * Durstenfeld's in-place Fisher-Yates: for i = n-1 down to 1 draw j uniform
 * on [0, i] and swap positions i and j of the identity arrangement.
 */
template <UniformIntSource R>
Permutation fisher_yates_permutation(std::size_t n, R& rng,
                                     std::optional<std::uint64_t> seed = std::nullopt) {
  if (n == 0) throw Error("fisher_yates_permutation: n must be >= 1");
  std::vector<std::uint64_t> arr(n);
  for (std::size_t i = 0; i < n; ++i) arr[i] = i;
  for (std::size_t i = n - 1; i >= 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(arr[i], arr[j]);
  }
  return Permutation(std::move(arr), seed);
}

template <typename T>
DenseTensor<T> apply_shuffle(const Permutation& p, const DenseTensor<T>& t);

template <typename T>
DenseTensor<T> apply_inverse_shuffle(const Permutation& p, const DenseTensor<T>& t);

/// "RSPM" | u16 version=1 | u64 n | n x u64 forward, all little-endian.
std::vector<std::uint8_t> serialize_permutation(const Permutation& p);
Permutation parse_permutation(std::span<const std::uint8_t> bytes);

void save_permutation(const Permutation& p, const std::string& path);
Permutation load_permutation(const std::string& path);

}  // namespace rstd
