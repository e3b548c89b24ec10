#pragma once

#include <cstdint>

namespace safin {

// SplitMix64. Chosen because the full state is a single u64 that can be
// stored in checkpoints and reproduced by any implementation of the same
// recurrence:
//   state += 0x9E3779B97F4A7C15
//   z = state; z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//   z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31; return z
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n). n must be >= 1. Uses the double path so the
    // draw sequence is documented by next_double alone; bias is negligible
    // for the corpus sizes this project deals with.
    std::uint64_t next_index(std::uint64_t n) {
        const auto i = static_cast<std::uint64_t>(next_double() * static_cast<double>(n));
        return i >= n ? n - 1 : i;
    }

    // Standard normal via Box-Muller (one value per call, the pair's second
    // half is discarded to keep the state->value mapping trivial).
    double gaussian();

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

} // namespace safin
