#include "safin/verify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "safin/image.hpp"
#include "safin/losses.hpp"
#include "safin/network.hpp"
#include "safin/ops.hpp"
#include "safin/tensor.hpp"
#include "safin/wavelet.hpp"

namespace safin {

void SuiteResult::add(const std::string& check_name, double measured, double limit) {
    checks.push_back({check_name, measured, limit, measured <= limit});
    pass = pass && checks.back().pass;
    worst = std::max(worst, measured);
}

namespace {

Tensor random_tensor(Shape shape, SplitMix64& rng, double lo, double hi) {
    return Tensor::uniform(std::move(shape), rng, lo, hi);
}

// Uniform over [-2,-0.1] u [0.1,2]: generic values away from the relu kink.
Tensor off_kink_tensor(Shape shape, SplitMix64& rng) {
    const auto n = shape_size(shape);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& e : v) {
        const double mag = rng.uniform(0.1, 2.0);
        e = rng.next_double() < 0.5 ? -mag : mag;
    }
    return Tensor(std::move(shape), std::move(v));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        worst = std::max(worst, std::abs(av[i] - bv[i]));
    }
    return worst;
}

} // namespace

SuiteResult verify_wavelet() {
    SuiteResult suite;
    suite.name = "wavelet";
    SplitMix64 rng(0x57a1e7);

    // Perfect reconstruction over 100 seeded tensors.
    double worst_roundtrip = 0.0;
    const std::int64_t extents[] = {4, 8, 16};
    for (int trial = 0; trial < 100; ++trial) {
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.next_index(2));
        const std::int64_t c = 1 + static_cast<std::int64_t>(rng.next_index(8));
        const std::int64_t s = extents[rng.next_index(3)];
        const Tensor x = random_tensor({n, c, s, s}, rng, -2.0, 2.0);
        worst_roundtrip = std::max(worst_roundtrip, max_abs_diff(wavelet_unpool(wavelet_pool(x)), x));
    }
    suite.add("roundtrip max |unpool(pool(x)) - x|", worst_roundtrip, 1e-12);

    // Golden single block.
    const Tensor golden({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    const WaveletBands gb = wavelet_pool(golden);
    double golden_err = std::abs(gb.ll.item() - 5.0);
    golden_err = std::max(golden_err, std::abs(gb.lh.item() - 1.0));
    golden_err = std::max(golden_err, std::abs(gb.hl.item() - 2.0));
    golden_err = std::max(golden_err, std::abs(gb.hh.item() - 0.0));
    suite.add("golden pool of [[1,2],[3,4]] vs (5,1,2,0)", golden_err, 0.0);
    suite.add("golden energy vs 30", std::abs(wavelet_energy(gb) - 30.0), 1e-9 * 30.0);

    // Parseval on random tensors.
    double worst_parseval = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = random_tensor({1, 3, 8, 8}, rng, -2.0, 2.0);
        double sum_sq = 0.0;
        for (double v : x.values()) {
            sum_sq += v * v;
        }
        worst_parseval =
            std::max(worst_parseval, std::abs(wavelet_energy(wavelet_pool(x)) - sum_sq) / sum_sq);
    }
    suite.add("Parseval relative error", worst_parseval, 1e-9);

    // Linearity and constant annihilation.
    {
        const Tensor x = random_tensor({1, 2, 4, 4}, rng, -1.0, 1.0);
        const Tensor y = random_tensor({1, 2, 4, 4}, rng, -1.0, 1.0);
        const Tensor combo = add(scale(x, 0.7), scale(y, -1.3));
        const WaveletBands bx = wavelet_pool(x);
        const WaveletBands by = wavelet_pool(y);
        const WaveletBands bc = wavelet_pool(combo);
        double worst_lin = 0.0;
        worst_lin = std::max(worst_lin, max_abs_diff(bc.ll, add(scale(bx.ll, 0.7), scale(by.ll, -1.3))));
        worst_lin = std::max(worst_lin, max_abs_diff(bc.lh, add(scale(bx.lh, 0.7), scale(by.lh, -1.3))));
        worst_lin = std::max(worst_lin, max_abs_diff(bc.hl, add(scale(bx.hl, 0.7), scale(by.hl, -1.3))));
        worst_lin = std::max(worst_lin, max_abs_diff(bc.hh, add(scale(bx.hh, 0.7), scale(by.hh, -1.3))));
        suite.add("linearity", worst_lin, 1e-12);

        const WaveletBands cb = wavelet_pool(Tensor::full({1, 1, 4, 4}, 3.0));
        double ca = 0.0;
        for (double v : cb.lh.values()) {
            ca = std::max(ca, std::abs(v));
        }
        for (double v : cb.hl.values()) {
            ca = std::max(ca, std::abs(v));
        }
        for (double v : cb.hh.values()) {
            ca = std::max(ca, std::abs(v));
        }
        double ll_err = 0.0;
        for (double v : cb.ll.values()) {
            ll_err = std::max(ll_err, std::abs(v - 6.0));
        }
        suite.add("constant annihilation (high bands exactly 0, LL = 2v)", std::max(ca, ll_err), 0.0);
    }
    return suite;
}

SuiteResult verify_norm() {
    SuiteResult suite;
    suite.name = "norm";
    SplitMix64 rng(0x2019af);

    // FIN identity parameters return the input exactly.
    {
        const Tensor f = random_tensor({2, 3, 4, 4}, rng, -2.0, 2.0);
        FinParams fin{Tensor::full({3}, 1.0), Tensor::zeros({3})};
        StyleParams style{Tensor::full(f.shape(), 1.0), Tensor::zeros(f.shape())};
        suite.add("FIN identity parameters", max_abs_diff(fin_apply(f, fin, style), f), 0.0);
    }
    // Scalar case 3*(2*0.5+1)-1 = 5.
    {
        const Tensor f({1, 1, 1, 1}, {0.5});
        FinParams fin{Tensor({1}, {2.0}), Tensor({1}, {1.0})};
        StyleParams style{Tensor({1, 1, 1, 1}, {3.0}), Tensor({1, 1, 1, 1}, {-1.0})};
        suite.add("FIN scalar case vs 5.0", std::abs(fin_apply(f, fin, style).item() - 5.0), 0.0);
    }

    // Normalization statistics over 100 random tensors.
    double worst_mean = 0.0;
    double worst_std = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.next_index(2));
        const std::int64_t c = 1 + static_cast<std::int64_t>(rng.next_index(4));
        const std::int64_t s = 4 + 2 * static_cast<std::int64_t>(rng.next_index(5));
        const Tensor x = random_tensor({n, c, s, s}, rng, -3.0, 3.0);
        const Tensor xb = instance_normalize(x, 1e-5);
        const Moments m = instance_moments(xb, 0.0);
        for (double v : m.mean.values()) {
            worst_mean = std::max(worst_mean, std::abs(v));
        }
        for (double v : m.stddev.values()) {
            worst_std = std::max(worst_std, std::abs(v - 1.0));
        }
    }
    suite.add("instance_normalize |mean|", worst_mean, 1e-9);
    suite.add("instance_normalize |std - 1|", worst_std, 1e-3);

    // Attention contract over 100 random weight/input draws.
    double worst_row = 0.0;
    double min_style_param = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::int64_t c = 8;
        SafinWeights w = make_safin_weights(c, rng);
        const Tensor f_c = instance_normalize(random_tensor({1, c, 4, 4}, rng, -2.0, 2.0), 1e-5);
        const Tensor f_s = instance_normalize(random_tensor({1, c, 6, 6}, rng, -2.0, 2.0), 1e-5);
        const Tensor a = attention_matrix(f_c, f_s, w, 0);
        const std::int64_t rows = a.shape()[0];
        const std::int64_t cols = a.shape()[1];
        for (std::int64_t r = 0; r < rows; ++r) {
            double sum = 0.0;
            for (std::int64_t j = 0; j < cols; ++j) {
                sum += a.values()[static_cast<std::size_t>(r * cols + j)];
            }
            worst_row = std::max(worst_row, std::abs(sum - 1.0));
        }
        const StyleParams p = safin_params(f_c, f_s, w);
        for (double v : p.gamma_s.values()) {
            min_style_param = std::min(min_style_param, v);
        }
        for (double v : p.beta_s.values()) {
            min_style_param = std::min(min_style_param, v);
        }
    }
    suite.add("attention row sums |sum - 1|", worst_row, 1e-9);
    suite.add("style parameter negativity (max(0, -min entry))", std::max(0.0, -min_style_param), 0.0);

    // 1x1 spatial case: the attention matrix is exactly [[1.0]].
    {
        SafinWeights w = make_safin_weights(8, rng);
        const Tensor f_c = random_tensor({1, 8, 1, 1}, rng, -2.0, 2.0);
        const Tensor f_s = random_tensor({1, 8, 1, 1}, rng, -2.0, 2.0);
        const Tensor a = attention_matrix(f_c, f_s, w, 0);
        suite.add("1x1 attention exactly [[1.0]]", std::abs(a.item() - 1.0), 0.0);
    }
    return suite;
}

SuiteResult verify_loss() {
    SuiteResult suite;
    suite.name = "loss";
    SplitMix64 rng(0x105e5);

    const StylizationConfig cfg{1e-5, true, {2, 4, 4, 4}, 16};
    const Model model = make_model(cfg, 11);
    const Tensor img = stack_images(generate_corpus(1, 16, 3));
    const EncodeResult enc = encode(model.encoder, img);

    suite.add("L_c(I, I)", content_loss(enc.taps[3], enc.taps[3]).item(), 0.0);

    const StyleLossResult sl = style_loss(enc.taps, enc.taps, cfg.epsilon);
    double style_zero = std::abs(sl.total.item());
    for (const auto& layer : sl.layers) {
        style_zero = std::max(style_zero, std::abs(layer.item()));
    }
    suite.add("L_s with identical taps (total and per layer)", style_zero, 0.0);

    // Weighted total agrees with content + lambda * style, and the pinned case.
    {
        const Tensor other = stack_images(generate_corpus(1, 16, 4));
        const EncodeResult enc2 = encode(model.encoder, other);
        const Tensor lc = content_loss(enc.taps[3], enc2.taps[3]);
        const StyleLossResult ls = style_loss(enc.taps, enc2.taps, cfg.epsilon);
        const LossWeights lw{10.0};
        const double lt = total_loss(lc, ls.total, lw).item();
        suite.add("total = content + lambda_s * style",
                  std::abs(lt - (lc.item() + lw.lambda_s * ls.total.item())), 1e-12);
        double layer_sum = 0.0;
        for (const auto& layer : ls.layers) {
            layer_sum += layer.item();
        }
        suite.add("per-layer style terms sum to total", std::abs(layer_sum - ls.total.item()), 1e-12);
    }
    suite.add("(2.0, 0.5, lambda 10) -> 7.0", std::abs(total_loss(2.0, 0.5, LossWeights{10.0}) - 7.0), 0.0);
    return suite;
}

namespace {

// Weighted sum keeps gradients generic (a plain sum of a softmax or a
// normalized field is constant and would hide errors).
Tensor weighted_sum(const Tensor& x, const Tensor& weights) {
    return reduce_sum(mul(x, weights));
}

void check_primitive_grads(SuiteResult& suite, SplitMix64& rng) {
    const double step = 1e-5;

    {
        const Tensor y = off_kink_tensor({2, 3}, rng);
        const Tensor w = off_kink_tensor({2, 3}, rng);
        suite.add("grad add",
                  grad_check([&](const Tensor& x) { return weighted_sum(add(x, y), w); },
                             off_kink_tensor({2, 3}, rng), step),
                  1e-6);
        suite.add("grad sub",
                  grad_check([&](const Tensor& x) { return weighted_sum(sub(y, x), w); },
                             off_kink_tensor({2, 3}, rng), step),
                  1e-6);
        suite.add("grad mul",
                  grad_check([&](const Tensor& x) { return weighted_sum(mul(x, y), w); },
                             off_kink_tensor({2, 3}, rng), step),
                  1e-6);
        suite.add("grad div",
                  grad_check([&](const Tensor& x) { return weighted_sum(div(y, x), w); },
                             off_kink_tensor({2, 3}, rng), step),
                  1e-6);
    }
    {
        // Broadcast bias path: (1,3,1,1) against (2,3,4,4).
        const Tensor big = off_kink_tensor({2, 3, 4, 4}, rng);
        const Tensor w = off_kink_tensor({2, 3, 4, 4}, rng);
        suite.add("grad add broadcast",
                  grad_check([&](const Tensor& x) { return weighted_sum(add(big, x), w); },
                             off_kink_tensor({1, 3, 1, 1}, rng), step),
                  1e-6);
        suite.add("grad mul broadcast",
                  grad_check([&](const Tensor& x) { return weighted_sum(mul(big, x), w); },
                             off_kink_tensor({1, 3, 1, 1}, rng), step),
                  1e-6);
    }
    {
        const Tensor w = off_kink_tensor({2, 4}, rng);
        suite.add("grad relu",
                  grad_check([&](const Tensor& x) { return weighted_sum(relu(x), w); },
                             off_kink_tensor({2, 4}, rng), step),
                  1e-6);
        suite.add("grad square",
                  grad_check([&](const Tensor& x) { return weighted_sum(square(x), w); },
                             off_kink_tensor({2, 4}, rng), step),
                  1e-6);
        suite.add("grad sqrt",
                  grad_check([&](const Tensor& x) { return weighted_sum(sqrt(x), w); },
                             Tensor::uniform({2, 4}, rng, 0.1, 1.0), step),
                  1e-6);
    }
    {
        const Tensor b = off_kink_tensor({4, 2}, rng);
        const Tensor w = off_kink_tensor({3, 2}, rng);
        suite.add("grad matmul lhs",
                  grad_check([&](const Tensor& x) { return weighted_sum(matmul(x, b), w); },
                             off_kink_tensor({3, 4}, rng), step),
                  1e-6);
        const Tensor a = off_kink_tensor({3, 4}, rng);
        suite.add("grad matmul rhs",
                  grad_check([&](const Tensor& x) { return weighted_sum(matmul(a, x), w); },
                             off_kink_tensor({4, 2}, rng), step),
                  1e-6);
    }
    {
        // Conv geometries used by the network: 3x3 pad 1, 2x2 stride 2, 1x1.
        struct Geometry {
            const char* name;
            std::int64_t k, stride, pad;
        };
        const Geometry geoms[] = {{"3x3 pad1", 3, 1, 1}, {"2x2 stride2", 2, 2, 0}, {"1x1", 1, 1, 0}};
        for (const auto& g : geoms) {
            const Tensor x0 = off_kink_tensor({1, 2, 4, 4}, rng);
            const Tensor w0 = off_kink_tensor({3, 2, g.k, g.k}, rng);
            const Tensor y0 = conv2d(x0, w0, g.stride, g.pad);
            const Tensor wsum = off_kink_tensor(y0.shape(), rng);
            suite.add(std::string("grad conv2d ") + g.name + " input",
                      grad_check([&](const Tensor& x) { return weighted_sum(conv2d(x, w0, g.stride, g.pad), wsum); },
                                 x0, step),
                      1e-6);
            suite.add(std::string("grad conv2d ") + g.name + " weight",
                      grad_check([&](const Tensor& w) { return weighted_sum(conv2d(x0, w, g.stride, g.pad), wsum); },
                                 w0, step),
                      1e-6);
        }
    }
    {
        const Tensor w = off_kink_tensor({3, 5}, rng);
        suite.add("grad softmax_rows",
                  grad_check([&](const Tensor& x) { return weighted_sum(softmax_rows(x), w); },
                             off_kink_tensor({3, 5}, rng), step),
                  1e-6);
    }
    {
        const Tensor w = off_kink_tensor({1, 2, 4, 4}, rng);
        suite.add("grad instance_normalize",
                  grad_check([&](const Tensor& x) { return weighted_sum(instance_normalize(x, 1e-5), w); },
                             off_kink_tensor({1, 2, 4, 4}, rng), step),
                  1e-6);
        const Tensor wm = off_kink_tensor({1, 2}, rng);
        const Tensor ws = off_kink_tensor({1, 2}, rng);
        suite.add("grad instance_moments",
                  grad_check(
                      [&](const Tensor& x) {
                          const Moments m = instance_moments(x, 1e-5);
                          return add(weighted_sum(m.mean, wm), weighted_sum(m.stddev, ws));
                      },
                      off_kink_tensor({1, 2, 4, 4}, rng), step),
                  1e-6);
    }
    {
        const Tensor wb = off_kink_tensor({1, 2, 2, 2}, rng);
        suite.add("grad wavelet_pool",
                  grad_check(
                      [&](const Tensor& x) {
                          const WaveletBands b = wavelet_pool(x);
                          return add(add(weighted_sum(b.ll, wb), weighted_sum(b.lh, wb)),
                                     add(weighted_sum(b.hl, wb), weighted_sum(b.hh, wb)));
                      },
                      off_kink_tensor({1, 2, 4, 4}, rng), step),
                  1e-6);
        const Tensor lh = off_kink_tensor({1, 2, 2, 2}, rng);
        const Tensor hl = off_kink_tensor({1, 2, 2, 2}, rng);
        const Tensor hh = off_kink_tensor({1, 2, 2, 2}, rng);
        const Tensor wu = off_kink_tensor({1, 2, 4, 4}, rng);
        suite.add("grad wavelet_unpool",
                  grad_check([&](const Tensor& x) { return weighted_sum(wavelet_unpool({x, lh, hl, hh}), wu); },
                             off_kink_tensor({1, 2, 2, 2}, rng), step),
                  1e-6);
    }
}

double composite_grad_worst(Model& model, const Tensor& content, const Tensor& style, double step) {
    double worst = 0.0;
    auto learnables = named_learnables(model);
    for (auto& [name, slot] : learnables) {
        (void)name;
        const Tensor original = *slot;
        auto f = [&](const Tensor& probe) {
            *slot = probe;
            const EncodeResult enc_c = encode(model.encoder, content);
            const EncodeResult enc_s = encode(model.encoder, style);
            const Tensor out = stylize_from_encodings(model, enc_c, enc_s);
            const EncodeResult enc_out = encode(model.encoder, out);
            const Tensor lc = content_loss(enc_out.taps[3], enc_c.taps[3]);
            const StyleLossResult ls = style_loss(enc_out.taps, enc_s.taps, model.cfg.epsilon);
            const Tensor lt = total_loss(lc, ls.total, LossWeights{10.0});
            *slot = original;
            return lt;
        };
        worst = std::max(worst, grad_check(f, original, step));
    }
    return worst;
}

} // namespace

SuiteResult verify_grad() {
    SuiteResult suite;
    suite.name = "grad";
    SplitMix64 rng(0x96adbad);

    check_primitive_grads(suite, rng);

    // safin_forward composite: every weight tensor of the module.
    {
        const double step = 1e-5;
        const std::int64_t c = 8;
        SafinWeights w = make_safin_weights(c, rng);
        const Tensor f_c = off_kink_tensor({1, c, 4, 4}, rng);
        const Tensor f_s = off_kink_tensor({1, c, 4, 4}, rng);
        const Tensor wsum = off_kink_tensor({1, c, 4, 4}, rng);
        Tensor* slots[] = {&w.fin.gamma_ind, &w.fin.beta_ind, &w.w_f, &w.w_g, &w.w_h, &w.w_gamma, &w.w_beta};
        double worst = 0.0;
        for (Tensor* slot : slots) {
            const Tensor original = *slot;
            auto f = [&](const Tensor& probe) {
                *slot = probe;
                const Tensor out = safin_forward(f_c, f_s, w, 1e-5, true);
                *slot = original;
                return weighted_sum(out, wsum);
            };
            worst = std::max(worst, grad_check(f, original, step));
        }
        suite.add("grad safin_forward (all module weights)", worst, 1e-4);
        // Ablation path stays differentiable too.
        double worst_off = 0.0;
        for (Tensor* slot : slots) {
            const Tensor original = *slot;
            auto f = [&](const Tensor& probe) {
                *slot = probe;
                const Tensor out = safin_forward(f_c, f_s, w, 1e-5, false);
                *slot = original;
                return weighted_sum(out, wsum);
            };
            worst_off = std::max(worst_off, grad_check(f, original, step));
        }
        suite.add("grad safin_forward attention off", worst_off, 1e-4);
    }

    // Full stylize + total loss graph at reduced size. The spec asks for
    // image_size 8, but the deepest tap is then 1x1 and its LL band (needed
    // by the content loss) does not exist; 16 is the smallest size where the
    // stated graph is defined.
    {
        StylizationConfig cfg{1e-5, true, {2, 4, 4, 4}, 16};
        Model model = make_model(cfg, 21);
        const Tensor content = stack_images(generate_corpus(1, 16, 31));
        const Tensor style = stack_images(generate_corpus(1, 16, 32));
        suite.add("grad full stylize + total_loss (widths 2,4,4,4, size 16)",
                  composite_grad_worst(model, content, style, 1e-5), 1e-4);

        StylizationConfig cfg_off = cfg;
        cfg_off.attention_enabled = false;
        Model model_off = make_model(cfg_off, 21);
        suite.add("grad full graph attention off",
                  composite_grad_worst(model_off, content, style, 1e-5), 1e-4);
    }
    return suite;
}

std::vector<SuiteResult> verify_suites(const std::string& which) {
    std::vector<SuiteResult> out;
    const bool all = which == "all";
    if (all || which == "wavelet") {
        out.push_back(verify_wavelet());
    }
    if (all || which == "grad") {
        out.push_back(verify_grad());
    }
    if (all || which == "norm") {
        out.push_back(verify_norm());
    }
    if (all || which == "loss") {
        out.push_back(verify_loss());
    }
    if (out.empty()) {
        throw std::invalid_argument("unknown suite '" + which + "', expected all|wavelet|grad|norm|loss");
    }
    return out;
}

} // namespace safin
