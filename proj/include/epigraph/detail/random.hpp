#pragma once

#include <cstdint>
#include <random>

namespace epigraph::detail {

// 53-bit uniform draw in [0, 1). Mapping the raw engine output ourselves keeps
// streams bit-identical across standard library implementations, unlike
// std::uniform_real_distribution.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

// Symmetric uniform in [-bound, bound].
inline double uniform_symmetric(std::mt19937_64& rng, double bound) {
    return uniform_in(rng, -bound, bound);
}

}  // namespace epigraph::detail
