#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cavmarl {

/// Engine used by every stochastic component. Distributions below are
/// implemented here rather than taken from <random> so draws are identical
/// across standard library implementations.
using Rng = std::mt19937_64;

/// Derives an independent seed for a named subsystem from a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

/// Uniform double in [0, 1) with 53 random bits.
double uniform01(Rng& rng);

/// Uniform double in [lo, hi).
double uniform(Rng& rng, double lo, double hi);

/// Uniform integer in [lo, hi] (inclusive), unbiased.
int uniform_int(Rng& rng, int lo, int hi);

/// Uniform index in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Standard Gumbel(0, 1) draw.
double gumbel(Rng& rng);

}  // namespace cavmarl
