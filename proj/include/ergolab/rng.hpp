#pragma once
// Deterministic seeding: every Monte Carlo point gets its own generator whose
// seed depends only on (master seed, stream tag, point index).

#include <cstdint>
#include <random>

namespace ergolab {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t substream(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
  return splitmix64(splitmix64(master ^ splitmix64(tag)) + index);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
  return Rng(substream(master, tag, index));
}

// Uniform in [0,1) with 53 random bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace ergolab
