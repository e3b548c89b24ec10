#include "safin/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "safin/kernels.hpp"

namespace safin {

void StylizationConfig::validate() const {
    if (input_size < 8 || input_size % 8 != 0) {
        throw std::invalid_argument("config: input_size " + std::to_string(input_size) +
                                    " must be a positive multiple of 8");
    }
    for (auto w : widths) {
        if (w < 1) {
            throw std::invalid_argument("config: channel widths must be >= 1");
        }
    }
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("config: epsilon must be > 0");
    }
}

namespace {

// Rows of the (c_out, c_in*k*k) kernel matrix are Gram-Schmidt
// orthonormalized Gaussian draws; needs c_out <= c_in*k*k, which holds for
// every supported width ladder.
Tensor orthogonal_conv_weight(std::int64_t c_out, std::int64_t c_in, std::int64_t k, SplitMix64& rng) {
    const std::int64_t d = c_in * k * k;
    if (c_out > d) {
        throw std::invalid_argument("encoder widths grow too fast for orthonormal rows: " +
                                    std::to_string(c_out) + " > " + std::to_string(d));
    }
    std::vector<double> rows(static_cast<std::size_t>(c_out * d));
    for (std::int64_t r = 0; r < c_out; ++r) {
        double* row = rows.data() + r * d;
        double norm = 0.0;
        // Redraw on (numerically) dependent rows; practically never loops.
        do {
            for (std::int64_t j = 0; j < d; ++j) {
                row[j] = rng.gaussian();
            }
            for (std::int64_t p = 0; p < r; ++p) {
                const double* prev = rows.data() + p * d;
                double dot = 0.0;
                for (std::int64_t j = 0; j < d; ++j) {
                    dot += row[j] * prev[j];
                }
                for (std::int64_t j = 0; j < d; ++j) {
                    row[j] -= dot * prev[j];
                }
            }
            norm = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                norm += row[j] * row[j];
            }
            norm = std::sqrt(norm);
        } while (norm < 1e-8);
        for (std::int64_t j = 0; j < d; ++j) {
            row[j] /= norm;
        }
    }
    return Tensor({c_out, c_in, k, k}, std::move(rows), false);
}

ConvLayer make_decoder_layer(std::int64_t c_out, std::int64_t c_in, SplitMix64& rng, double bias_value) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * 9));
    ConvLayer layer;
    layer.weight = Tensor::uniform({c_out, c_in, 3, 3}, rng, -bound, bound, true);
    layer.bias = Tensor::full({1, c_out, 1, 1}, bias_value, true);
    return layer;
}

Tensor conv_block(const Tensor& x, const ConvLayer& layer, bool with_relu) {
    const Tensor y = add(conv2d(x, layer.weight, 1, 1), layer.bias);
    return with_relu ? relu(y) : y;
}

} // namespace

Model make_model(const StylizationConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    // Independent sub-streams so adding draws to one component never shifts
    // another.
    SplitMix64 root(seed);
    SplitMix64 enc_rng(root.next_u64());
    SplitMix64 dec_rng(root.next_u64());
    SplitMix64 ll_rng(root.next_u64());
    SplitMix64 hf_rng(root.next_u64());

    Model m;
    m.cfg = cfg;

    const auto& w = cfg.widths;
    const std::array<std::int64_t, 4> enc_in{3, w[0], w[1], w[2]};
    for (std::size_t k = 0; k < 4; ++k) {
        m.encoder.blocks[k].weight = orthogonal_conv_weight(w[k], enc_in[k], 3, enc_rng);
        m.encoder.blocks[k].bias = Tensor::uniform({1, w[k], 1, 1}, enc_rng, -0.05, 0.05, false);
    }

    // Deepest-first; the last block emits the image and starts at mid-gray so
    // the [0,1] clamp begins inside its linear region.
    const std::array<std::int64_t, 4> dec_in{w[3], w[2], w[1], w[0]};
    const std::array<std::int64_t, 4> dec_out{w[2], w[1], w[0], 3};
    for (std::size_t k = 0; k < 4; ++k) {
        m.decoder.blocks[k] = make_decoder_layer(dec_out[k], dec_in[k], dec_rng, k == 3 ? 0.5 : 0.0);
    }

    m.safin_ll = make_safin_weights(w[3], ll_rng);
    m.safin_hf = make_safin_weights(w[2], hf_rng);
    return m;
}

EncodeResult encode(const EncoderNet& enc, const Tensor& image) {
    require_rank4(image, "encode");
    const std::int64_t h = image.shape()[2];
    const std::int64_t w = image.shape()[3];
    if (h % 8 != 0 || w % 8 != 0) {
        throw std::invalid_argument("encode: spatial extents " + std::to_string(h) + "x" + std::to_string(w) +
                                    " must be divisible by 8");
    }
    EncodeResult r;
    Tensor x = image;
    for (std::size_t k = 0; k < 4; ++k) {
        x = conv_block(x, enc.blocks[k], true);
        r.taps[k] = x;
        if (k < 3) {
            r.bands[k] = wavelet_pool(x);
            x = r.bands[k].ll;
        }
    }
    return r;
}

Tensor stylize_from_encodings(const Model& m, const EncodeResult& content, const EncodeResult& style) {
    const double eps = m.cfg.epsilon;
    const bool attn = m.cfg.attention_enabled;

    // Deepest LL-path feature through the first module.
    Tensor x = safin_forward(content.taps[3], style.taps[3], m.safin_ll, eps, attn);

    // Skip bands: AdaIN against the style's same-scale band everywhere; the
    // deepest bands additionally pass through the shared high-frequency
    // module (its internal normalization makes the preceding AdaIN a pure
    // re-centering).
    std::array<WaveletBands, 3> skips;
    for (std::size_t s = 0; s < 3; ++s) {
        skips[s].lh = adain(content.bands[s].lh, style.bands[s].lh, eps);
        skips[s].hl = adain(content.bands[s].hl, style.bands[s].hl, eps);
        skips[s].hh = adain(content.bands[s].hh, style.bands[s].hh, eps);
    }
    skips[2].lh = safin_forward(skips[2].lh, style.bands[2].lh, m.safin_hf, eps, attn);
    skips[2].hl = safin_forward(skips[2].hl, style.bands[2].hl, m.safin_hf, eps, attn);
    skips[2].hh = safin_forward(skips[2].hh, style.bands[2].hh, m.safin_hf, eps, attn);

    // Decoder: conv, then unpool with the transformed skip bands, deepest
    // site first; the main path provides each unpool's LL band.
    for (std::size_t k = 0; k < 3; ++k) {
        x = conv_block(x, m.decoder.blocks[k], true);
        const WaveletBands& s = skips[2 - k];
        x = wavelet_unpool({x, s.lh, s.hl, s.hh});
    }
    x = conv_block(x, m.decoder.blocks[3], false);
    return clamp01(x);
}

Tensor stylize(const Model& m, const Tensor& content, const Tensor& style) {
    return stylize_from_encodings(m, encode(m.encoder, content), encode(m.encoder, style));
}

std::vector<std::pair<std::string, Tensor*>> named_learnables(Model& m) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t k = 0; k < 4; ++k) {
        const std::string base = "decoder/" + std::to_string(k);
        out.emplace_back(base + "/weight", &m.decoder.blocks[k].weight);
        out.emplace_back(base + "/bias", &m.decoder.blocks[k].bias);
    }
    const std::pair<const char*, SafinWeights*> modules[] = {{"safin_ll", &m.safin_ll},
                                                             {"safin_hf", &m.safin_hf}};
    for (const auto& [prefix, w] : modules) {
        const std::string base(prefix);
        out.emplace_back(base + "/gamma_ind", &w->fin.gamma_ind);
        out.emplace_back(base + "/beta_ind", &w->fin.beta_ind);
        out.emplace_back(base + "/w_f", &w->w_f);
        out.emplace_back(base + "/w_g", &w->w_g);
        out.emplace_back(base + "/w_h", &w->w_h);
        out.emplace_back(base + "/w_gamma", &w->w_gamma);
        out.emplace_back(base + "/w_beta", &w->w_beta);
    }
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> named_learnables(const Model& m) {
    auto mutable_view = named_learnables(const_cast<Model&>(m));
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mutable_view.size());
    for (auto& [name, t] : mutable_view) {
        out.emplace_back(std::move(name), t);
    }
    return out;
}

double encoder_checksum(const EncoderNet& enc) {
    double acc = 0.0;
    double weight = 1.0;
    for (const auto& b : enc.blocks) {
        for (const Tensor* t : {&b.weight, &b.bias}) {
            for (double v : t->values()) {
                acc += weight * v;
                weight += 1.0;
            }
        }
    }
    return acc;
}

} // namespace safin
