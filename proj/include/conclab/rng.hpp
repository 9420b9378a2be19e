#pragma once

// Counter-based seed derivation. Every (trial, column, part) draw owns an
// engine seeded from a hash of its coordinates, so generation order and
// thread count never change the numbers produced.

#include <cstdint>
#include <random>
#include <string_view>

namespace conclab {

using Engine = std::mt19937_64;

inline constexpr std::string_view kSeedRule = "splitmix64(master,stream,trial,column,part)/mt19937_64";

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t trial,
                                    std::uint64_t column = 0, std::uint64_t part = 0) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ trial);
  h = splitmix64(h ^ column);
  return splitmix64(h ^ part);
}

inline Engine make_engine(std::uint64_t master, std::uint64_t stream, std::uint64_t trial,
                          std::uint64_t column = 0, std::uint64_t part = 0) {
  return Engine(derive_seed(master, stream, trial, column, part));
}

}  // namespace conclab
