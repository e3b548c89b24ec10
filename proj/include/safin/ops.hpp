#pragma once

#include "safin/rng.hpp"
#include "safin/tensor.hpp"

namespace safin {

// Style-independent channel-wise affine parameters, shape (C,).
struct FinParams {
    Tensor gamma_ind;
    Tensor beta_ind;
};

// Style-dependent spatial parameters shaped like the content feature map.
// Both are ReLU outputs, so every entry is >= 0.
struct StyleParams {
    Tensor gamma_s;
    Tensor beta_s;
};

// All learnables of one module: the channel affine plus the attention
// projections (f and g reduce to max(1, C/8) channels, h keeps C) and the
// two 1x1 heads that turn the attention output into gamma_s / beta_s.
struct SafinWeights {
    FinParams fin;
    Tensor w_f;     // (C', C, 1, 1)
    Tensor w_g;     // (C', C, 1, 1)
    Tensor w_h;     // (C,  C, 1, 1)
    Tensor w_gamma; // (C,  C, 1, 1)
    Tensor w_beta;  // (C,  C, 1, 1)

    std::int64_t channels() const { return fin.gamma_ind.shape()[0]; }
};

// Identity-at-start init: gamma_ind = 1, beta_ind = 0, 1x1 convs uniform in
// +-1/sqrt(fan_in).
SafinWeights make_safin_weights(std::int64_t channels, SplitMix64& rng);

// (x - mean) / std per instance and channel, moments over the spatial grid.
Tensor instance_normalize(const Tensor& x, double epsilon);

// gamma_s * (gamma_ind * f_c_bar + beta_ind) + beta_s, with the channel
// affine broadcast over (N, H, W).
Tensor fin_apply(const Tensor& f_c_bar, const FinParams& fin, const StyleParams& style);

// Per instance: A = softmax(Q K^T) over style positions, output = A V mapped
// back to the content's spatial grid. Style may have different extents.
Tensor self_attention(const Tensor& f_c_bar, const Tensor& f_s_bar, const SafinWeights& w);

// The row-stochastic (Hc*Wc, Hs*Ws) attention matrix of one instance.
Tensor attention_matrix(const Tensor& f_c_bar, const Tensor& f_s_bar, const SafinWeights& w,
                        std::int64_t n);

// gamma_s = relu(w_gamma * SA), beta_s = relu(w_beta * SA).
StyleParams safin_params(const Tensor& f_c_bar, const Tensor& f_s_bar, const SafinWeights& w);

// Attention-free fallback: the style parameters come from the 1x1 heads
// applied to the globally averaged normalized style feature, expanded to the
// content grid (spatially constant).
StyleParams fin_params(const Tensor& f_c_bar, const Tensor& f_s_bar, const SafinWeights& w);

// Full module: normalize both inputs, produce style parameters through the
// attention path or the fallback, then apply the factorized affine.
Tensor safin_forward(const Tensor& f_c, const Tensor& f_s, const SafinWeights& w, double epsilon,
                     bool attention_enabled);

// std_s * instance_normalize(f_c) + mean_s with the style's moments.
Tensor adain(const Tensor& f_c, const Tensor& f_s, double epsilon);

} // namespace safin
