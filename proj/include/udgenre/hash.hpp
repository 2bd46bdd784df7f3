#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace udgenre {

// 64-bit FNV-1a. Used for content fingerprints and cache keys, so the value
// must be stable across platforms and runs.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= kPrime;
    }
    return *this;
  }

  // Fields are separated by a 0x1f byte so ("ab","c") != ("a","bc").
  Fnv1a& field(std::string_view bytes) {
    update(bytes);
    state_ ^= 0x1fu;
    state_ *= kPrime;
    return *this;
  }

  std::uint64_t value() const { return state_; }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  static constexpr std::uint64_t kOffset = 14695981039346656037ull;
  static constexpr std::uint64_t kPrime = 1099511628211ull;
  std::uint64_t state_ = kOffset;
};

// splitmix64 finalizer; derives independent generator seeds from (seed, key).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (key + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace udgenre
