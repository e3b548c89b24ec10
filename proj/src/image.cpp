#include "safin/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>

#include <png.h>

namespace safin {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void require_image(const Tensor& image, const char* what) {
    if (image.rank() != 3 || image.shape()[0] != 3) {
        throw std::invalid_argument(std::string(what) + ": expected a (3,H,W) image, got " +
                                    shape_str(image.shape()));
    }
}

} // namespace

Tensor read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw std::runtime_error("cannot open " + path);
    }
    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw std::runtime_error(path + " is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    // Normalize everything to 8-bit RGB.
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": unsupported channel layout");
    }
    pixels.resize(static_cast<std::size_t>(w) * h * 3);
    row_ptrs.resize(h);
    for (png_uint_32 r = 0; r < h; ++r) {
        row_ptrs[r] = pixels.data() + static_cast<std::size_t>(r) * w * 3;
    }
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    std::vector<double> data(static_cast<std::size_t>(3) * h * w);
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                data[(static_cast<std::size_t>(ch) * h + y) * w + x] =
                    pixels[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(ch)] / 255.0;
            }
        }
    }
    return Tensor({3, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)}, std::move(data));
}

void write_png(const std::string& path, const Tensor& image) {
    require_image(image, "write_png");
    const std::int64_t h = image.shape()[1];
    const std::int64_t w = image.shape()[2];

    std::vector<png_byte> pixels(static_cast<std::size_t>(h) * w * 3);
    const auto& v = image.values();
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                double f = v[(static_cast<std::size_t>(ch) * h + y) * w + x];
                f = std::min(1.0, std::max(0.0, f));
                pixels[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(ch)] =
                    static_cast<png_byte>(std::floor(f * 255.0 + 0.5));
            }
        }
    }

    const std::filesystem::path target(path);
    const std::filesystem::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        FilePtr fp(std::fopen(tmp.string().c_str(), "wb"));
        if (!fp) {
            throw std::runtime_error("cannot create " + tmp.string());
        }
        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        png_infop info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info) {
            png_destroy_write_struct(&png, &info);
            throw std::runtime_error("libpng init failed");
        }
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw std::runtime_error("failed to encode " + path);
        }
        png_init_io(png, fp.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                     PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (std::int64_t y = 0; y < h; ++y) {
            png_write_row(png, pixels.data() + static_cast<std::size_t>(y) * w * 3);
        }
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    }
    std::filesystem::rename(tmp, target);
}

Tensor center_crop_resize(const Tensor& image, std::int64_t size) {
    require_image(image, "center_crop_resize");
    if (size < 1) {
        throw std::invalid_argument("center_crop_resize: size must be >= 1");
    }
    const std::int64_t h = image.shape()[1];
    const std::int64_t w = image.shape()[2];
    const std::int64_t side = std::min(h, w);
    const std::int64_t off_y = (h - side) / 2;
    const std::int64_t off_x = (w - side) / 2;
    const auto& src = image.values();

    std::vector<double> out(static_cast<std::size_t>(3) * size * size);
    // Bilinear with half-pixel centers.
    const double scale = static_cast<double>(side) / static_cast<double>(size);
    for (int ch = 0; ch < 3; ++ch) {
        for (std::int64_t y = 0; y < size; ++y) {
            const double sy = (static_cast<double>(y) + 0.5) * scale - 0.5;
            const std::int64_t y0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(sy)), 0, side - 1);
            const std::int64_t y1 = std::min<std::int64_t>(y0 + 1, side - 1);
            const double fy = std::clamp(sy - static_cast<double>(y0), 0.0, 1.0);
            for (std::int64_t x = 0; x < size; ++x) {
                const double sx = (static_cast<double>(x) + 0.5) * scale - 0.5;
                const std::int64_t x0 =
                    std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(sx)), 0, side - 1);
                const std::int64_t x1 = std::min<std::int64_t>(x0 + 1, side - 1);
                const double fx = std::clamp(sx - static_cast<double>(x0), 0.0, 1.0);
                auto at = [&](std::int64_t yy, std::int64_t xx) {
                    return src[(static_cast<std::size_t>(ch) * h + (off_y + yy)) * w + (off_x + xx)];
                };
                const double top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                const double bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out[(static_cast<std::size_t>(ch) * size + y) * size + x] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    return Tensor({3, size, size}, std::move(out));
}

Tensor stack_images(const std::vector<Tensor>& images) {
    if (images.empty()) {
        throw std::invalid_argument("stack_images: empty input");
    }
    for (const auto& im : images) {
        require_image(im, "stack_images");
        if (im.shape() != images.front().shape()) {
            throw std::invalid_argument("stack_images: mixed shapes " + shape_str(images.front().shape()) +
                                        " and " + shape_str(im.shape()));
        }
    }
    const std::int64_t h = images.front().shape()[1];
    const std::int64_t w = images.front().shape()[2];
    const std::int64_t chw = 3 * h * w;
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(images.size()), 3, h, w});
    auto& ov = out.values();
    for (std::size_t n = 0; n < images.size(); ++n) {
        const auto& iv = images[n].values();
        std::copy(iv.begin(), iv.end(), ov.begin() + static_cast<std::ptrdiff_t>(n * static_cast<std::size_t>(chw)));
    }
    return out;
}

namespace {

Tensor gradient_image(std::int64_t size, SplitMix64& rng) {
    std::vector<double> v(static_cast<std::size_t>(3) * size * size);
    const double angle = rng.uniform(0.0, 6.28318530717958647692);
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    double c0[3], c1[3];
    for (int ch = 0; ch < 3; ++ch) {
        c0[ch] = rng.next_double();
        c1[ch] = rng.next_double();
    }
    for (std::int64_t y = 0; y < size; ++y) {
        for (std::int64_t x = 0; x < size; ++x) {
            const double t = 0.5 + 0.5 * ((x * dx + y * dy) / static_cast<double>(size));
            const double tt = std::clamp(t, 0.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) {
                v[(static_cast<std::size_t>(ch) * size + y) * size + x] = c0[ch] + (c1[ch] - c0[ch]) * tt;
            }
        }
    }
    return Tensor({3, size, size}, std::move(v));
}

Tensor checkerboard_image(std::int64_t size, SplitMix64& rng) {
    std::vector<double> v(static_cast<std::size_t>(3) * size * size);
    const std::int64_t cell = 2 + static_cast<std::int64_t>(rng.next_index(static_cast<std::uint64_t>(size / 4)));
    double c0[3], c1[3];
    for (int ch = 0; ch < 3; ++ch) {
        c0[ch] = rng.next_double();
        c1[ch] = rng.next_double();
    }
    for (std::int64_t y = 0; y < size; ++y) {
        for (std::int64_t x = 0; x < size; ++x) {
            const bool odd = ((x / cell) + (y / cell)) % 2 != 0;
            for (int ch = 0; ch < 3; ++ch) {
                v[(static_cast<std::size_t>(ch) * size + y) * size + x] = odd ? c1[ch] : c0[ch];
            }
        }
    }
    return Tensor({3, size, size}, std::move(v));
}

Tensor blob_image(std::int64_t size, SplitMix64& rng) {
    std::vector<double> v(static_cast<std::size_t>(3) * size * size);
    const int blobs = 2 + static_cast<int>(rng.next_index(3));
    double base[3];
    for (int ch = 0; ch < 3; ++ch) {
        base[ch] = 0.1 + 0.3 * rng.next_double();
        for (std::int64_t i = 0; i < size * size; ++i) {
            v[static_cast<std::size_t>(ch) * size * size + static_cast<std::size_t>(i)] = base[ch];
        }
    }
    for (int b = 0; b < blobs; ++b) {
        const double cx = rng.uniform(0.2, 0.8) * static_cast<double>(size);
        const double cy = rng.uniform(0.2, 0.8) * static_cast<double>(size);
        const double sigma = rng.uniform(0.08, 0.25) * static_cast<double>(size);
        double amp[3];
        for (int ch = 0; ch < 3; ++ch) {
            amp[ch] = rng.uniform(-0.5, 0.9);
        }
        for (std::int64_t y = 0; y < size; ++y) {
            for (std::int64_t x = 0; x < size; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const double g = std::exp(-d2 / (2.0 * sigma * sigma));
                for (int ch = 0; ch < 3; ++ch) {
                    auto& px = v[(static_cast<std::size_t>(ch) * size + y) * size + x];
                    px = std::clamp(px + amp[ch] * g, 0.0, 1.0);
                }
            }
        }
    }
    return Tensor({3, size, size}, std::move(v));
}

} // namespace

std::vector<Tensor> generate_corpus(std::int64_t count, std::int64_t size, std::uint64_t seed) {
    if (count < 1 || size < 8) {
        throw std::invalid_argument("generate_corpus: count must be >= 1 and size >= 8");
    }
    SplitMix64 rng(seed);
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        switch (i % 3) {
        case 0: out.push_back(gradient_image(size, rng)); break;
        case 1: out.push_back(checkerboard_image(size, rng)); break;
        default: out.push_back(blob_image(size, rng)); break;
        }
    }
    return out;
}

} // namespace safin
