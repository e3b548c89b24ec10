#pragma once

#include "safin/haar_filters.hpp"
#include "safin/tensor.hpp"

namespace safin {

// The four half-resolution Haar bands of one feature map. All bands share
// shape (N, C, H/2, W/2); for a constant input the three high-pass bands are
// exactly zero.
struct WaveletBands {
    Tensor ll;
    Tensor lh;
    Tensor hl;
    Tensor hh;
};

// Depthwise stride-2 analysis with the orthonormal 2x2 kernels. H and W must
// be even. Gradient recorded.
WaveletBands wavelet_pool(const Tensor& x);

// Exact inverse of wavelet_pool: every 2x2 output block is the sum of the
// band values times their kernels. Gradient recorded.
Tensor wavelet_unpool(const WaveletBands& bands);

// Sum of squared entries over all four bands; equals the input's sum of
// squares by orthonormality.
double wavelet_energy(const WaveletBands& bands);

} // namespace safin
