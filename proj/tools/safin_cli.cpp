#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "safin/image.hpp"
#include "safin/tensor.hpp"
#include "safin/trainer.hpp"
#include "safin/verify.hpp"
#include "safin/wavelet.hpp"

namespace {

int run_train(const safin::TrainConfig& cfg) {
    const auto content = safin::load_corpus(cfg.content_dir, cfg.image_size);
    const auto style = safin::load_corpus(cfg.style_dir, cfg.image_size);
    safin::TrainState state = safin::make_train_state(cfg);
    safin::run_training(state, content, style, &std::cout);
    safin::save_checkpoint(state, cfg.checkpoint_path);
    return 0;
}

int run_stylize(const std::string& content_path, const std::string& style_path,
                const std::string& ckpt_path, const std::string& out_path) {
    safin::TrainState state = safin::load_checkpoint(ckpt_path);
    const std::int64_t size = state.cfg.image_size;
    const safin::Tensor content = safin::center_crop_resize(safin::read_png(content_path), size);
    const safin::Tensor style = safin::center_crop_resize(safin::read_png(style_path), size);

    safin::NoGradGuard no_grad;
    const safin::Tensor batch_out =
        safin::stylize(state.model, safin::stack_images({content}), safin::stack_images({style}));

    safin::Tensor image({3, size, size}, std::vector<double>(batch_out.values()));
    safin::write_png(out_path, image);

    double err = 0.0;
    for (std::size_t i = 0; i < content.values().size(); ++i) {
        err += std::abs(image.values()[i] - content.values()[i]);
    }
    err /= static_cast<double>(content.values().size());
    std::printf("reconstruction_error\t%.12g\n", err);
    return 0;
}

int run_verify(const std::string& suite) {
    const auto results = safin::verify_suites(suite);
    bool all_pass = true;
    for (const auto& s : results) {
        std::printf("%s: %s (worst error %.3g)\n", s.name.c_str(), s.pass ? "PASS" : "FAIL", s.worst);
        for (const auto& c : s.checks) {
            std::printf("  [%s] %s: %.3g (limit %.3g)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                        c.measured, c.limit);
        }
        all_pass = all_pass && s.pass;
    }
    return all_pass ? 0 : 1;
}

int run_wavelet_roundtrip(int trials, std::uint64_t seed) {
    safin::SplitMix64 rng(seed);
    double worst = 0.0;
    const std::int64_t extents[] = {4, 8, 16};
    for (int t = 0; t < trials; ++t) {
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.next_index(2));
        const std::int64_t c = 1 + static_cast<std::int64_t>(rng.next_index(8));
        const std::int64_t s = extents[rng.next_index(3)];
        const safin::Tensor x = safin::Tensor::uniform({n, c, s, s}, rng, -2.0, 2.0);
        const safin::Tensor back = safin::wavelet_unpool(safin::wavelet_pool(x));
        for (std::size_t i = 0; i < x.values().size(); ++i) {
            worst = std::max(worst, std::abs(back.values()[i] - x.values()[i]));
        }
    }
    std::printf("max_roundtrip_error\t%.3g\n", worst);
    return worst < 1e-12 ? 0 : 1;
}

int run_gen_corpus(const std::string& out_dir, std::int64_t count, std::int64_t size,
                   std::uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    const auto images = safin::generate_corpus(count, size, seed);
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "img_%03zu.png", i);
        safin::write_png((std::filesystem::path(out_dir) / name).string(), images[i]);
    }
    std::printf("wrote %zu images to %s\n", images.size(), out_dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAFIN-style wavelet stylization: training, inference and verification"};
    app.require_subcommand(1);

    safin::TrainConfig train_cfg;
    auto* train = app.add_subcommand("train", "train the decoder and both normalization modules");
    train->add_option("--content", train_cfg.content_dir, "content image directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    train->add_option("--style", train_cfg.style_dir, "style image directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    train->add_option("--steps", train_cfg.steps, "optimization steps")->required();
    train->add_option("--out", train_cfg.checkpoint_path, "checkpoint output path")->required();
    train->add_option("--lambda-s", train_cfg.lambda_s, "style loss weight");
    train->add_option("--lr", train_cfg.learning_rate, "Adam learning rate");
    train->add_option("--seed", train_cfg.seed, "RNG seed");
    train->add_option("--image-size", train_cfg.image_size, "square training resolution");
    train->add_option("--batch-size", train_cfg.batch_size, "images per step");
    train->add_flag_callback("--no-attention",
                             [&train_cfg]() { train_cfg.attention_enabled = false; },
                             "use the attention-free fallback for style parameters");

    std::string sty_content, sty_style, sty_ckpt, sty_out;
    auto* stylize = app.add_subcommand("stylize", "stylize one image with a trained checkpoint");
    stylize->add_option("--content", sty_content, "content image (PNG)")->required();
    stylize->add_option("--style", sty_style, "style image (PNG)")->required();
    stylize->add_option("--ckpt", sty_ckpt, "checkpoint path")->required();
    stylize->add_option("--out", sty_out, "output image path")->required();

    std::string suite = "all";
    auto* verify = app.add_subcommand("verify", "run the invariant suites");
    verify->add_option("--suite", suite, "all|wavelet|grad|norm|loss")
        ->check(CLI::IsMember({"all", "wavelet", "grad", "norm", "loss"}));

    int rt_trials = 100;
    std::uint64_t rt_seed = 1;
    auto* roundtrip = app.add_subcommand("wavelet-roundtrip", "seeded pool/unpool reconstruction check");
    roundtrip->add_option("--trials", rt_trials, "number of random tensors");
    roundtrip->add_option("--seed", rt_seed, "RNG seed");

    std::string corpus_dir;
    std::int64_t corpus_count = 8;
    std::int64_t corpus_size = 32;
    std::uint64_t corpus_seed = 1;
    auto* gen = app.add_subcommand("gen-corpus", "write a synthetic image corpus");
    gen->add_option("--out", corpus_dir, "output directory")->required();
    gen->add_option("--count", corpus_count, "number of images");
    gen->add_option("--size", corpus_size, "square image size");
    gen->add_option("--seed", corpus_seed, "RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) {
            return run_train(train_cfg);
        }
        if (stylize->parsed()) {
            return run_stylize(sty_content, sty_style, sty_ckpt, sty_out);
        }
        if (verify->parsed()) {
            return run_verify(suite);
        }
        if (roundtrip->parsed()) {
            return run_wavelet_roundtrip(rt_trials, rt_seed);
        }
        if (gen->parsed()) {
            return run_gen_corpus(corpus_dir, corpus_count, corpus_size, corpus_seed);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
