#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

namespace paraug {

// SplitMix64. Every seeded draw in the library (wildcard choice, noise
// images) goes through this generator so outputs are reproducible across
// platforms and languages. Reference vector: seed 1234567 yields
// 6457827717110365317, 3203168211198807973, 9817491932198370423, ...
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t operator()() noexcept { return next(); }
  static constexpr std::uint64_t min() noexcept { return 0; }
  static constexpr std::uint64_t max() noexcept { return ~std::uint64_t{0}; }

  // Uniform in [0, 1) with 53 bits of resolution.
  constexpr double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

// Draws one index with probability proportional to weights[i].
// Weights must be positive; an empty span is a caller bug.
inline std::size_t weighted_index(SplitMix64& rng, std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("weighted_index: no weights");
  double total = 0.0;
  for (double w : weights) total += w;
  const double target = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc) return i;
  }
  return weights.size() - 1;
}

}  // namespace paraug
