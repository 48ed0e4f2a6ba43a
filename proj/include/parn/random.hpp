#pragma once

#include <cstdint>
#include <random>

namespace parn {

/// splitmix64 step; used to derive independent per-item seeds from a master
/// seed so that per-sample work is reproducible regardless of batch order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mix a master seed with a stream/item index into a fresh seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x6a09e667f3bcc909ULL));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(splitmix64(seed));
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(mix_seed(seed, index));
}

}  // namespace parn
