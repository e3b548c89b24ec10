#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "safin/tensor.hpp"

namespace safin {

// Images are rank-3 (3, H, W) tensors with values in [0, 1]. Pixel to float
// is value/255; float to pixel rounds half up after clamping.

Tensor read_png(const std::string& path);

// Writes 8-bit RGB atomically (temp file in the same directory + rename).
void write_png(const std::string& path, const Tensor& image);

// Center-crop to a square over the longer axis, then bilinear resize.
Tensor center_crop_resize(const Tensor& image, std::int64_t size);

// (3,H,W) images -> (N,3,H,W) batch.
Tensor stack_images(const std::vector<Tensor>& images);

// Seeded synthetic images: linear gradients, checkerboards and Gaussian
// blobs cycled in that order. Used by gen-corpus and the hermetic runs.
std::vector<Tensor> generate_corpus(std::int64_t count, std::int64_t size, std::uint64_t seed);

} // namespace safin
