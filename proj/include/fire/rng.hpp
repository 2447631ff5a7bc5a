#pragma once

/*
 * Counter-based random streams.
 *
 * Every random value is a pure function of (key, counter):
 *
 *   value(key, n) = mix64(key + (n + 1) * 0x9E3779B97F4A7C15)      (mod 2^64)
 *
 * where mix64 is the SplitMix64 finalizer. A stream for sample i of a pool
 * seeded with base_seed uses key = derive_seed(base_seed, i). Uniform doubles
 * take the top 53 bits: (value >> 11) * 2^-53, so they lie in [0, 1).
 *
 * The recipe uses only 64-bit wrapping arithmetic, so any language can
 * reproduce the exact same streams.
 */

#include <cstdint>

namespace fire {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Key of the independent stream for `index` under `base_seed`.
constexpr std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) noexcept {
  return mix64(base_seed + (index + 1) * kGoldenGamma);
}

class RngStream {
 public:
  using result_type = std::uint64_t;

  constexpr explicit RngStream(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGoldenGamma);
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  constexpr double next_double() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound). Rejection sampling keeps it unbiased.
  constexpr std::uint64_t next_below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    for (;;) {
      const std::uint64_t v = next_u64();
      if (v < limit) return v % bound;
    }
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t consumed() const noexcept { return counter_; }

  // UniformRandomBitGenerator interface
  static constexpr std::uint64_t min() noexcept { return 0; }
  static constexpr std::uint64_t max() noexcept { return UINT64_MAX; }
  constexpr std::uint64_t operator()() noexcept { return next_u64(); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace fire
