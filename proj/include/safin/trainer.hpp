#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "safin/losses.hpp"
#include "safin/network.hpp"

namespace safin {

struct TrainConfig {
    std::int64_t steps = 1;
    std::int64_t batch_size = 4;
    double learning_rate = 1e-3;
    double lambda_s = 10.0;
    std::uint64_t seed = 0;
    std::int64_t image_size = 32;
    std::string content_dir;
    std::string style_dir;
    std::string checkpoint_path;
    bool attention_enabled = true;
    std::array<std::int64_t, 4> widths{8, 16, 32, 64};
    double epsilon = 1e-5;

    void validate() const;
    StylizationConfig stylization() const;
};

struct AdamSlot {
    Tensor m;
    Tensor v;
};

struct TrainState {
    Model model;
    std::vector<AdamSlot> moments; // parallel to named_learnables(model)
    std::int64_t step = 0;
    std::uint64_t rng_state = 0; // sampling stream, stored so resumes replay exactly
    TrainConfig cfg;
};

TrainState make_train_state(const TrainConfig& cfg);

// Decodable images in dir, alphabetical by filename, center-cropped and
// resized; files that fail to decode are reported on stderr and skipped.
std::vector<Tensor> load_corpus(const std::string& dir, std::int64_t image_size);

// One optimization step on the given (N,3,S,S) batches: stylize, loss,
// backward, Adam on the learnables. A non-finite loss throws and leaves the
// state untouched.
LossReport train_step(TrainState& state, const Tensor& content_batch, const Tensor& style_batch);

// Draws batch indices from the state's rng (content then style, uniform with
// replacement), runs cfg.steps steps and emits one TSV line per step:
// step<TAB>content<TAB>style<TAB>total.
std::vector<LossReport> run_training(TrainState& state, const std::vector<Tensor>& content_corpus,
                                     const std::vector<Tensor>& style_corpus, std::ostream* log);

// Wrong magic bytes or an unsupported format version.
struct CheckpointVersionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Truncation, CRC mismatch, malformed records or inconsistent fingerprint.
struct CheckpointCorruptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Little-endian binary checkpoint: magic "SAFN", u32 format version, u64
// config fingerprint, tensor records (u32 name length, name bytes, u32 rank,
// u64 extents, f64 data), and a trailing CRC32 of everything before it.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

std::uint64_t config_fingerprint(const TrainConfig& cfg);

} // namespace safin
