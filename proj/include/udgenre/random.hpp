#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace udgenre {

// Unbiased draw from [0, n) by rejection. std::uniform_int_distribution is
// not specified bit-exactly across standard libraries; this is.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace udgenre
