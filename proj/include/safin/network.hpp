#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "safin/ops.hpp"
#include "safin/tensor.hpp"
#include "safin/wavelet.hpp"

namespace safin {

struct ConvLayer {
    Tensor weight; // (C_out, C_in, 3, 3)
    Tensor bias;   // (1, C_out, 1, 1)
};

// Four conv(3x3, pad 1) + ReLU blocks with wavelet pooling between them.
// Weights are frozen after seeded init: rows of each flattened kernel matrix
// are orthonormalized so the random projection roughly preserves feature
// geometry in place of a pretrained encoder.
struct EncoderNet {
    std::array<ConvLayer, 4> blocks;
};

// Mirror of the encoder: blocks run deepest-first, wavelet unpooling between
// them, final block linear (no ReLU). All weights learnable.
struct DecoderNet {
    std::array<ConvLayer, 4> blocks;
};

struct StylizationConfig {
    double epsilon = 1e-5;
    bool attention_enabled = true;
    std::array<std::int64_t, 4> widths{8, 16, 32, 64};
    std::int64_t input_size = 32; // must be divisible by 8

    void validate() const;
};

struct EncodeResult {
    std::array<Tensor, 4> taps;        // ReLU_1_1 .. ReLU_4_1
    std::array<WaveletBands, 3> bands; // produced between blocks, shallow to deep
};

struct Model {
    StylizationConfig cfg;
    EncoderNet encoder;
    DecoderNet decoder;
    SafinWeights safin_ll; // deepest LL path, widths[3] channels
    SafinWeights safin_hf; // shared across LH/HL/HH, widths[2] channels
};

Model make_model(const StylizationConfig& cfg, std::uint64_t seed);

EncodeResult encode(const EncoderNet& enc, const Tensor& image);

// Full pipeline from precomputed encodings; returns the clamped image.
Tensor stylize_from_encodings(const Model& m, const EncodeResult& content, const EncodeResult& style);

Tensor stylize(const Model& m, const Tensor& content, const Tensor& style);

// Learnables in a fixed order (decoder blocks then the two SAFIN modules),
// paired with stable names used by the checkpoint format.
std::vector<std::pair<std::string, Tensor*>> named_learnables(Model& m);
std::vector<std::pair<std::string, const Tensor*>> named_learnables(const Model& m);

double encoder_checksum(const EncoderNet& enc);

} // namespace safin
