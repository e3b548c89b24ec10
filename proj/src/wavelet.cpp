#include "safin/wavelet.hpp"

#include <stdexcept>
#include <string>

#include "safin/kernels.hpp"

namespace safin {

WaveletBands wavelet_pool(const Tensor& x) {
    require_rank4(x, "wavelet_pool");
    const auto& s = x.shape();
    if (s[2] % 2 != 0) {
        throw std::invalid_argument("wavelet_pool: height " + std::to_string(s[2]) + " is odd");
    }
    if (s[3] % 2 != 0) {
        throw std::invalid_argument("wavelet_pool: width " + std::to_string(s[3]) + " is odd");
    }
    const std::int64_t n = s[0];
    const std::int64_t c = s[1];
    const std::int64_t h2 = s[2] / 2;
    const std::int64_t w2 = s[3] / 2;
    const Shape band_shape{n, c, h2, w2};
    WaveletBands b{Tensor::zeros(band_shape), Tensor::zeros(band_shape), Tensor::zeros(band_shape),
                   Tensor::zeros(band_shape)};
    kernels::haar_pool(x.values().data(), n, c, h2, w2, b.ll.values().data(), b.lh.values().data(),
                       b.hl.values().data(), b.hh.values().data(), false);
    if (grad_enabled() && x.requires_grad()) {
        b.ll.set_requires_grad(true);
        b.lh.set_requires_grad(true);
        b.hl.set_requires_grad(true);
        b.hh.set_requires_grad(true);
        Tensor xc = x;
        WaveletBands bc = b;
        Tape::active().record([xc, bc, n, c, h2, w2]() mutable {
            if (!xc.requires_grad()) {
                return;
            }
            // The analysis transform is orthonormal, so its adjoint is the
            // synthesis transform applied to the band gradients.
            const std::vector<double> zeros(static_cast<std::size_t>(n * c * h2 * w2), 0.0);
            const double* dll = bc.ll.has_grad() ? bc.ll.grad().data() : zeros.data();
            const double* dlh = bc.lh.has_grad() ? bc.lh.grad().data() : zeros.data();
            const double* dhl = bc.hl.has_grad() ? bc.hl.grad().data() : zeros.data();
            const double* dhh = bc.hh.has_grad() ? bc.hh.grad().data() : zeros.data();
            if (!bc.ll.has_grad() && !bc.lh.has_grad() && !bc.hl.has_grad() && !bc.hh.has_grad()) {
                return;
            }
            kernels::haar_unpool(dll, dlh, dhl, dhh, n, c, h2, w2, xc.grad_buffer(), true);
        });
    }
    return b;
}

Tensor wavelet_unpool(const WaveletBands& bands) {
    require_rank4(bands.ll, "wavelet_unpool");
    const auto& s = bands.ll.shape();
    if (bands.lh.shape() != s || bands.hl.shape() != s || bands.hh.shape() != s) {
        throw std::invalid_argument("wavelet_unpool: band shapes differ: ll " + shape_str(s) + ", lh " +
                                    shape_str(bands.lh.shape()) + ", hl " + shape_str(bands.hl.shape()) +
                                    ", hh " + shape_str(bands.hh.shape()));
    }
    const std::int64_t n = s[0];
    const std::int64_t c = s[1];
    const std::int64_t h2 = s[2];
    const std::int64_t w2 = s[3];
    Tensor out = Tensor::zeros({n, c, 2 * h2, 2 * w2});
    kernels::haar_unpool(bands.ll.values().data(), bands.lh.values().data(), bands.hl.values().data(),
                         bands.hh.values().data(), n, c, h2, w2, out.values().data(), false);
    const bool rec = grad_enabled() && (bands.ll.requires_grad() || bands.lh.requires_grad() ||
                                        bands.hl.requires_grad() || bands.hh.requires_grad());
    if (rec) {
        out.set_requires_grad(true);
        WaveletBands bc = bands;
        Tensor oc = out;
        Tape::active().record([bc, oc, n, c, h2, w2]() mutable {
            if (!oc.has_grad()) {
                return;
            }
            // Adjoint of synthesis is analysis on the output gradient. Bands
            // that do not require grad get their contribution thrown away.
            const std::size_t band_n = static_cast<std::size_t>(n * c * h2 * w2);
            std::vector<double> dll(band_n, 0.0), dlh(band_n, 0.0), dhl(band_n, 0.0), dhh(band_n, 0.0);
            kernels::haar_pool(oc.grad().data(), n, c, h2, w2, dll.data(), dlh.data(), dhl.data(),
                               dhh.data(), false);
            if (bc.ll.requires_grad()) {
                kernels::axpy(1.0, dll.data(), bc.ll.grad_buffer(), static_cast<std::int64_t>(band_n));
            }
            if (bc.lh.requires_grad()) {
                kernels::axpy(1.0, dlh.data(), bc.lh.grad_buffer(), static_cast<std::int64_t>(band_n));
            }
            if (bc.hl.requires_grad()) {
                kernels::axpy(1.0, dhl.data(), bc.hl.grad_buffer(), static_cast<std::int64_t>(band_n));
            }
            if (bc.hh.requires_grad()) {
                kernels::axpy(1.0, dhh.data(), bc.hh.grad_buffer(), static_cast<std::int64_t>(band_n));
            }
        });
    }
    return out;
}

double wavelet_energy(const WaveletBands& bands) {
    double total = 0.0;
    for (const Tensor* b : {&bands.ll, &bands.lh, &bands.hl, &bands.hh}) {
        const auto& v = b->values();
        std::vector<double> sq(v.size());
        kernels::unary_map(kernels::UnaryKind::square, v.data(), sq.data(),
                           static_cast<std::int64_t>(v.size()));
        total += kernels::reduce_sum(sq.data(), static_cast<std::int64_t>(sq.size()));
    }
    return total;
}

} // namespace safin
