#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace genuda {

using Rng = std::mt19937_64;

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(std::string_view s);

// Stable labeled stream splitting: every random stream in a run is a pure function of
// the global seed, a stream name, and optional integer coordinates (epoch, index, ...).
uint64_t derive_seed(uint64_t seed, std::string_view stream, std::initializer_list<uint64_t> coords = {});

inline Rng make_rng(uint64_t seed, std::string_view stream, std::initializer_list<uint64_t> coords = {}) {
  return Rng(derive_seed(seed, stream, coords));
}

}  // namespace genuda
