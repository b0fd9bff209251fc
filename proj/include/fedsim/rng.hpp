#pragma once

#include <cstdint>
#include <random>

namespace fedsim {

// splitmix64 finalizer. Scrambles a 64-bit word; used to spawn decorrelated
// child seeds for independent random streams (per client, per round, ...).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t index = 0) {
  return mix64(base ^ mix64(stream ^ mix64(index)));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64{seed}; }

}  // namespace fedsim
