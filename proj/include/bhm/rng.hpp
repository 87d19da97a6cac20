// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace bhm {

// All stochastic code in the library draws through these helpers instead of
// <random>'s distribution classes: the standard leaves uniform_real/normal
// output sequences implementation-defined, and reruns must be byte-identical
// across toolchains. mt19937_64 itself is fully specified, so it stays.
using rng64 = std::mt19937_64;

// 53-bit mantissa construction; result in [0, 1).
inline double uniform01(rng64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(rng64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Box-Muller, basic form. One value per call; the sibling sin branch is
// discarded on purpose so the draw count per sample is fixed.
double normal(rng64& g, double mean = 0.0, double sd = 1.0);

// splitmix64 finalizer: turns (seed, stream tags) into decorrelated
// sub-seeds so every cycle / whale / restart gets an independent stream.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b = 0);

} // namespace bhm
