#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace senti {

using Rng = std::mt19937_64;

/// Independent generator for one named pipeline stage ("split", "init",
/// "shuffle", "dropout", "negatives", ...). Streams for different names
/// never share draws, so reordering one stage leaves the others untouched.
Rng substream(std::uint64_t seed, std::string_view stage);

/// Uniform real in [0, 1) from 53 random bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n); modulo bias is negligible for n << 2^64.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    return rng() % n;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace senti
