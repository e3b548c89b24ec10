#include "safin/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace safin {

namespace {

Tensor uniform_fan_in(Shape shape, std::int64_t fan_in, SplitMix64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), rng, -bound, bound, true);
}

void check_same_nc(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape()[0] != b.shape()[0] || a.shape()[1] != b.shape()[1]) {
        throw std::invalid_argument(std::string(what) + ": content " + shape_str(a.shape()) +
                                    " and style " + shape_str(b.shape()) +
                                    " differ in batch or channel extent");
    }
}

} // namespace

SafinWeights make_safin_weights(std::int64_t channels, SplitMix64& rng) {
    if (channels < 1) {
        throw std::invalid_argument("make_safin_weights: channels must be >= 1");
    }
    const std::int64_t reduced = std::max<std::int64_t>(1, channels / 8);
    SafinWeights w;
    w.fin.gamma_ind = Tensor::full({channels}, 1.0, true);
    w.fin.beta_ind = Tensor::zeros({channels}, true);
    w.w_f = uniform_fan_in({reduced, channels, 1, 1}, channels, rng);
    w.w_g = uniform_fan_in({reduced, channels, 1, 1}, channels, rng);
    w.w_h = uniform_fan_in({channels, channels, 1, 1}, channels, rng);
    w.w_gamma = uniform_fan_in({channels, channels, 1, 1}, channels, rng);
    w.w_beta = uniform_fan_in({channels, channels, 1, 1}, channels, rng);
    return w;
}

Tensor instance_normalize(const Tensor& x, double epsilon) {
    require_rank4(x, "instance_normalize");
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("instance_normalize: epsilon must be > 0");
    }
    const Moments m = instance_moments(x, epsilon);
    const std::int64_t n = x.shape()[0];
    const std::int64_t c = x.shape()[1];
    const Tensor mean_b = reshape(m.mean, {n, c, 1, 1});
    const Tensor std_b = reshape(m.stddev, {n, c, 1, 1});
    return div(sub(x, mean_b), std_b);
}

Tensor fin_apply(const Tensor& f_c_bar, const FinParams& fin, const StyleParams& style) {
    require_rank4(f_c_bar, "fin_apply");
    const std::int64_t c = f_c_bar.shape()[1];
    if (fin.gamma_ind.rank() != 1 || fin.gamma_ind.shape()[0] != c || fin.beta_ind.shape() != fin.gamma_ind.shape()) {
        throw std::invalid_argument("fin_apply: channel parameters " + shape_str(fin.gamma_ind.shape()) +
                                    " do not match feature " + shape_str(f_c_bar.shape()));
    }
    if (style.gamma_s.shape() != f_c_bar.shape() || style.beta_s.shape() != f_c_bar.shape()) {
        throw std::invalid_argument("fin_apply: style parameters " + shape_str(style.gamma_s.shape()) +
                                    " do not match feature " + shape_str(f_c_bar.shape()));
    }
    const Tensor gamma_ind = reshape(fin.gamma_ind, {1, c, 1, 1});
    const Tensor beta_ind = reshape(fin.beta_ind, {1, c, 1, 1});
    const Tensor inner = add(mul(gamma_ind, f_c_bar), beta_ind);
    return add(mul(style.gamma_s, inner), style.beta_s);
}

namespace {

void check_attention_inputs(const Tensor& f_c_bar, const Tensor& f_s_bar, const SafinWeights& w) {
    require_rank4(f_c_bar, "self_attention");
    require_rank4(f_s_bar, "self_attention");
    check_same_nc(f_c_bar, f_s_bar, "self_attention");
    if (f_c_bar.shape()[1] != w.channels()) {
        throw std::invalid_argument("self_attention: weights built for " + std::to_string(w.channels()) +
                                    " channels, features have " + std::to_string(f_c_bar.shape()[1]));
    }
}

Tensor attention_rows(const Tensor& q_all, const Tensor& k_all, std::int64_t n) {
    const Tensor q = positions_matrix(instance_slice(q_all, n)); // (Hc*Wc, C')
    const Tensor k = positions_matrix(instance_slice(k_all, n)); // (Hs*Ws, C')
    return softmax_rows(matmul(q, transpose2d(k)));
}

} // namespace

Tensor self_attention(const Tensor& f_c_bar, const Tensor& f_s_bar, const SafinWeights& w) {
    check_attention_inputs(f_c_bar, f_s_bar, w);
    const std::int64_t batch = f_c_bar.shape()[0];
    const std::int64_t h_c = f_c_bar.shape()[2];
    const std::int64_t w_c = f_c_bar.shape()[3];

    const Tensor q_all = conv2d(f_c_bar, w.w_f, 1, 0);
    const Tensor k_all = conv2d(f_s_bar, w.w_g, 1, 0);
    const Tensor v_all = conv2d(f_s_bar, w.w_h, 1, 0);

    std::vector<Tensor> outputs;
    outputs.reserve(static_cast<std::size_t>(batch));
    for (std::int64_t n = 0; n < batch; ++n) {
        const Tensor v = positions_matrix(instance_slice(v_all, n)); // (Hs*Ws, C)
        outputs.push_back(feature_from_positions(matmul(attention_rows(q_all, k_all, n), v), h_c, w_c));
    }
    return stack_instances(outputs);
}

Tensor attention_matrix(const Tensor& f_c_bar, const Tensor& f_s_bar, const SafinWeights& w,
                        std::int64_t n) {
    check_attention_inputs(f_c_bar, f_s_bar, w);
    return attention_rows(conv2d(f_c_bar, w.w_f, 1, 0), conv2d(f_s_bar, w.w_g, 1, 0), n);
}

StyleParams safin_params(const Tensor& f_c_bar, const Tensor& f_s_bar, const SafinWeights& w) {
    const Tensor sa = self_attention(f_c_bar, f_s_bar, w);
    StyleParams p;
    p.gamma_s = relu(conv2d(sa, w.w_gamma, 1, 0));
    p.beta_s = relu(conv2d(sa, w.w_beta, 1, 0));
    return p;
}

StyleParams fin_params(const Tensor& f_c_bar, const Tensor& f_s_bar, const SafinWeights& w) {
    require_rank4(f_c_bar, "fin_params");
    require_rank4(f_s_bar, "fin_params");
    check_same_nc(f_c_bar, f_s_bar, "fin_params");
    const std::int64_t n = f_s_bar.shape()[0];
    const std::int64_t c = f_s_bar.shape()[1];
    // Channel-wise global average of the normalized style feature; spatially
    // constant parameters at the content resolution.
    const Tensor pooled = reshape(instance_moments(f_s_bar, 0.0).mean, {n, c, 1, 1});
    StyleParams p;
    p.gamma_s = expand(relu(conv2d(pooled, w.w_gamma, 1, 0)), f_c_bar.shape());
    p.beta_s = expand(relu(conv2d(pooled, w.w_beta, 1, 0)), f_c_bar.shape());
    return p;
}

Tensor safin_forward(const Tensor& f_c, const Tensor& f_s, const SafinWeights& w, double epsilon,
                     bool attention_enabled) {
    const Tensor f_c_bar = instance_normalize(f_c, epsilon);
    const Tensor f_s_bar = instance_normalize(f_s, epsilon);
    const StyleParams style =
        attention_enabled ? safin_params(f_c_bar, f_s_bar, w) : fin_params(f_c_bar, f_s_bar, w);
    return fin_apply(f_c_bar, w.fin, style);
}

Tensor adain(const Tensor& f_c, const Tensor& f_s, double epsilon) {
    require_rank4(f_c, "adain");
    require_rank4(f_s, "adain");
    if (f_c.shape()[1] != f_s.shape()[1]) {
        throw std::invalid_argument("adain: channel extents differ, content " + shape_str(f_c.shape()) +
                                    ", style " + shape_str(f_s.shape()));
    }
    const Moments style_m = instance_moments(f_s, epsilon);
    const std::int64_t n = f_s.shape()[0];
    const std::int64_t c = f_s.shape()[1];
    const Tensor mean_b = reshape(style_m.mean, {n, c, 1, 1});
    const Tensor std_b = reshape(style_m.stddev, {n, c, 1, 1});
    return add(mul(std_b, instance_normalize(f_c, epsilon)), mean_b);
}

} // namespace safin
