#pragma once
#include <cstdint>
#include <random>
#include <string_view>

namespace bbe {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a of a text tag.
std::uint64_t hash_tag(std::string_view tag) noexcept;

/// Seed of an independent substream identified by (master, tag, a, b).
/// Streams for distinct keys are statistically independent; the same key always yields the same seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t a = 0,
                          std::uint64_t b = 0) noexcept;

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

/// Uniform draw in [0,1) from the top 53 bits of one engine output.
inline double canonical(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * canonical(rng); }

/// Uniform integer in [lo, hi].
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double mean, double sd) {
  if (sd <= 0.0) return mean;
  return std::normal_distribution<double>(mean, sd)(rng);
}

/// Gaussian truncated to [mean - width*sd, mean + width*sd] by rejection.
double truncated_gaussian(Rng& rng, double mean, double sd, double width = 3.0);

} // namespace bbe
