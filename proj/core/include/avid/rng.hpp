#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace avid {

using Rng = std::mt19937_64;

/// Seed for the named substream `stream` (and optional per-item `index`) of a
/// root seed. Distinct names give statistically independent generators, so
/// enabling one consumer of randomness never shifts another's draws.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(root, stream, index));
}

}  // namespace avid
