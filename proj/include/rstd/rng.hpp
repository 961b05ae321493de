#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace rstd {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/**
 * Seeding discipline.
 *
 * One root seed per experiment. Repetition r uses repetition_seed(root, r).
 * Within a repetition, the shuffle permutation of conv layer L (1-based) is
 * seeded with `rep ^ L`, core/weight init of layer L with init_seed(rep, L),
 * and the example order of epoch e with epoch_seed(rep, e).
 */
constexpr std::uint64_t repetition_seed(std::uint64_t root, std::uint64_t repetition) {
  return splitmix64(root ^ splitmix64(repetition + 1));
}
constexpr std::uint64_t permutation_seed(std::uint64_t rep_seed, std::uint64_t layer) {
  return rep_seed ^ layer;
}
constexpr std::uint64_t init_seed(std::uint64_t rep_seed, std::uint64_t layer) {
  return splitmix64(rep_seed ^ (0xC0DE000000000000ULL + layer));
}
constexpr std::uint64_t epoch_seed(std::uint64_t rep_seed, std::uint64_t epoch) {
  return splitmix64(rep_seed ^ (0xE90C000000000000ULL + epoch));
}

/**
 * Portable 64-bit generator: std::mt19937_64 (its output sequence is fixed by
 * the C++ standard) with hand-written bounded-integer and Gaussian
 * transforms, so draws are identical across standard libraries.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }

  /// Uniform integer on [0, upper] by rejection sampling.
  std::uint64_t uniform_int(std::uint64_t upper) {
    if (upper == std::numeric_limits<std::uint64_t>::max()) return next();
    const std::uint64_t range = upper + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % range + 1) % range;
    std::uint64_t x = next();
    while (x > limit) x = next();
    return x % range;
  }

  /// Uniform double on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal draw (Box-Muller, spare value cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rstd
