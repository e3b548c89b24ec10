#pragma once

#include <array>

#include "safin/tensor.hpp"

namespace safin {

struct LossWeights {
    double lambda_s = 10.0;
};

struct LossReport {
    double content = 0.0;
    double style = 0.0;
    std::array<double, 4> per_layer_style{};
    double total = 0.0;
};

// The LL band of the Haar decomposition of a tap feature.
Tensor ll_of_tap(const Tensor& feature);

// Mean over the batch of the per-instance L2 distance between the LL bands
// of the deepest taps. Returns a scalar tensor; differentiable.
Tensor content_loss(const Tensor& tap4_out, const Tensor& tap4_content);

struct StyleLossResult {
    Tensor total;                 // scalar
    std::array<Tensor, 4> layers; // scalar per tap
};

// Per tap: batch mean of |mu difference|_2 + |sigma difference|_2 over the
// channel moments of the LL bands; summed over the four taps.
StyleLossResult style_loss(const std::array<Tensor, 4>& taps_out,
                           const std::array<Tensor, 4>& taps_style, double epsilon);

Tensor total_loss(const Tensor& content, const Tensor& style, const LossWeights& w);
double total_loss(double content, double style, const LossWeights& w);

// Batch mean of the per-instance euclidean norm of x (norm over all
// non-batch axes). Public because both losses are built from it.
Tensor batch_mean_l2(const Tensor& x);

} // namespace safin
