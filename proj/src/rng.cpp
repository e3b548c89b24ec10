#include "safin/rng.hpp"

#include <cmath>

namespace safin {

double SplitMix64::gaussian() {
    // Box-Muller; u1 is kept away from 0 so log stays finite.
    double u1 = next_double();
    if (u1 < 1e-300) {
        u1 = 1e-300;
    }
    const double u2 = next_double();
    const double two_pi = 6.28318530717958647692;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

} // namespace safin
