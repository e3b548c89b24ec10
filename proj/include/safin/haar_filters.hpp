#pragma once

#include <array>

namespace safin {

// Orthonormal Haar filter pair and the four 2x2 analysis kernels built from
// their outer products. Orientation convention: in K_XY, X is the row
// (vertical) filter and Y the column (horizontal) filter, i.e.
// K_XY[i][j] = X[i] * Y[j]. LH therefore responds to horizontal variation
// and HL to vertical variation; the [[1,2],[3,4]] golden test in the wavelet
// suite pins this down.
struct HaarFilters {
    static constexpr double inv_sqrt2 = 0.70710678118654752440;

    static constexpr std::array<double, 2> low{inv_sqrt2, inv_sqrt2};
    static constexpr std::array<double, 2> high{-inv_sqrt2, inv_sqrt2};

    // Flattened row-major 2x2 kernels: index = 2*i + j.
    static constexpr std::array<double, 4> k_ll{0.5, 0.5, 0.5, 0.5};
    static constexpr std::array<double, 4> k_lh{-0.5, 0.5, -0.5, 0.5};
    static constexpr std::array<double, 4> k_hl{-0.5, -0.5, 0.5, 0.5};
    static constexpr std::array<double, 4> k_hh{0.5, -0.5, -0.5, 0.5};

    static constexpr std::array<const std::array<double, 4>*, 4> kernels() {
        return {&k_ll, &k_lh, &k_hl, &k_hh};
    }
};

} // namespace safin
