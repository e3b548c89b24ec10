#include "safin/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <stdexcept>

#include "safin/image.hpp"

namespace safin {

void TrainConfig::validate() const {
    if (steps < 1) {
        throw std::invalid_argument("config: steps must be >= 1");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("config: batch_size must be >= 1");
    }
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("config: learning_rate must be > 0");
    }
    if (lambda_s < 0.0) {
        throw std::invalid_argument("config: lambda_s must be >= 0");
    }
    stylization().validate();
}

StylizationConfig TrainConfig::stylization() const {
    StylizationConfig s;
    s.epsilon = epsilon;
    s.attention_enabled = attention_enabled;
    s.widths = widths;
    s.input_size = image_size;
    return s;
}

TrainState make_train_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.model = make_model(cfg.stylization(), cfg.seed);
    // The model init consumed the first four draws of the root stream; the
    // batch-sampling stream is seeded with the fifth so the two never alias.
    SplitMix64 root(cfg.seed);
    for (int i = 0; i < 4; ++i) {
        root.next_u64();
    }
    st.rng_state = root.next_u64();

    for (auto& [name, t] : named_learnables(st.model)) {
        (void)name;
        st.moments.push_back({Tensor::zeros(t->shape()), Tensor::zeros(t->shape())});
    }
    return st;
}

std::vector<Tensor> load_corpus(const std::string& dir, std::int64_t image_size) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw std::runtime_error("corpus directory does not exist: " + dir);
    }
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<Tensor> images;
    for (const auto& f : files) {
        try {
            images.push_back(center_crop_resize(read_png(f), image_size));
        } catch (const std::exception& e) {
            std::cerr << "skipping " << f << ": " << e.what() << "\n";
        }
    }
    if (images.empty()) {
        throw std::runtime_error("no decodable images in " + dir);
    }
    return images;
}

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_update(Tensor& param, AdamSlot& slot, double lr, std::int64_t t) {
    const std::int64_t n = param.size();
    const std::vector<double> no_grad(static_cast<std::size_t>(n), 0.0);
    const double* g = param.has_grad() ? param.grad().data() : no_grad.data();
    auto& m = slot.m.values();
    auto& v = slot.v.values();
    auto& p = param.values();
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
    for (std::int64_t i = 0; i < n; ++i) {
        m[static_cast<std::size_t>(i)] = kAdamBeta1 * m[static_cast<std::size_t>(i)] + (1.0 - kAdamBeta1) * g[i];
        v[static_cast<std::size_t>(i)] =
            kAdamBeta2 * v[static_cast<std::size_t>(i)] + (1.0 - kAdamBeta2) * g[i] * g[i];
        const double mhat = m[static_cast<std::size_t>(i)] / bc1;
        const double vhat = v[static_cast<std::size_t>(i)] / bc2;
        p[static_cast<std::size_t>(i)] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

} // namespace

LossReport train_step(TrainState& state, const Tensor& content_batch, const Tensor& style_batch) {
    require_rank4(content_batch, "train_step content");
    require_rank4(style_batch, "train_step style");
    if (content_batch.shape() != style_batch.shape()) {
        throw std::invalid_argument("train_step: batch shapes differ, " + shape_str(content_batch.shape()) +
                                    " vs " + shape_str(style_batch.shape()));
    }

    Tape::active().clear();
    auto learnables = named_learnables(state.model);
    for (auto& [name, t] : learnables) {
        (void)name;
        t->zero_grad();
    }

    const EncodeResult enc_c = encode(state.model.encoder, content_batch);
    const EncodeResult enc_s = encode(state.model.encoder, style_batch);
    const Tensor out = stylize_from_encodings(state.model, enc_c, enc_s);
    const EncodeResult enc_out = encode(state.model.encoder, out);

    const Tensor lc = content_loss(enc_out.taps[3], enc_c.taps[3]);
    const StyleLossResult ls = style_loss(enc_out.taps, enc_s.taps, state.cfg.epsilon);
    const LossWeights lw{state.cfg.lambda_s};
    const Tensor lt = total_loss(lc, ls.total, lw);

    LossReport report;
    report.content = lc.item();
    report.style = ls.total.item();
    for (std::size_t k = 0; k < 4; ++k) {
        report.per_layer_style[k] = ls.layers[k].item();
    }
    report.total = lt.item();
    if (!std::isfinite(report.total)) {
        Tape::active().clear();
        throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(state.step + 1) +
                                 ", state left unchanged");
    }

    backward(lt);
    const std::int64_t t = state.step + 1;
    for (std::size_t i = 0; i < learnables.size(); ++i) {
        adam_update(*learnables[i].second, state.moments[i], state.cfg.learning_rate, t);
    }
    state.step = t;
    return report;
}

std::vector<LossReport> run_training(TrainState& state, const std::vector<Tensor>& content_corpus,
                                     const std::vector<Tensor>& style_corpus, std::ostream* log) {
    if (content_corpus.empty() || style_corpus.empty()) {
        throw std::invalid_argument("run_training: empty corpus");
    }
    std::vector<LossReport> reports;
    reports.reserve(static_cast<std::size_t>(state.cfg.steps));
    SplitMix64 rng(0);
    for (std::int64_t s = 0; s < state.cfg.steps; ++s) {
        rng.set_state(state.rng_state);
        std::vector<Tensor> content;
        std::vector<Tensor> style;
        for (std::int64_t b = 0; b < state.cfg.batch_size; ++b) {
            content.push_back(content_corpus[rng.next_index(content_corpus.size())]);
        }
        for (std::int64_t b = 0; b < state.cfg.batch_size; ++b) {
            style.push_back(style_corpus[rng.next_index(style_corpus.size())]);
        }
        state.rng_state = rng.state();

        const LossReport r = train_step(state, stack_images(content), stack_images(style));
        reports.push_back(r);
        if (log) {
            char line[160];
            std::snprintf(line, sizeof(line), "%lld\t%.12g\t%.12g\t%.12g\n",
                          static_cast<long long>(state.step), r.content, r.style, r.total);
            (*log) << line;
        }
    }
    return reports;
}

} // namespace safin
