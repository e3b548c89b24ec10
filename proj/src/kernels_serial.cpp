#include "safin/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "safin/haar_filters.hpp"

// Serial reference implementations. Kept deliberately plain: the parallel
// variants in kernels_parallel.cpp must reproduce these bit for bit, and the
// unit tests compare the two directly.

namespace safin::kernels::serial {

double reduce_sum(const double* x, std::int64_t n) {
    const std::int64_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
    double total = 0.0;
    for (std::int64_t b = 0; b < blocks; ++b) {
        const std::int64_t lo = b * kReduceBlock;
        const std::int64_t hi = std::min(n, lo + kReduceBlock);
        double acc = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) {
            acc += x[i];
        }
        total += acc;
    }
    return total;
}

void axpy(double a, const double* x, double* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        y[i] += a * x[i];
    }
}

namespace {

inline double apply_binary(BinaryKind kind, double a, double b) {
    switch (kind) {
    case BinaryKind::add: return a + b;
    case BinaryKind::sub: return a - b;
    case BinaryKind::mul: return a * b;
    case BinaryKind::div: return a / b;
    }
    return 0.0;
}

} // namespace

void binary_broadcast(BinaryKind kind, const double* a, const std::int64_t* a_stride,
                      const double* b, const std::int64_t* b_stride,
                      double* out, const std::int64_t* shape, int rank) {
    std::int64_t total = 1;
    for (int d = 0; d < rank; ++d) {
        total *= shape[d];
    }
    for (std::int64_t flat = 0; flat < total; ++flat) {
        std::int64_t rem = flat;
        std::int64_t ai = 0;
        std::int64_t bi = 0;
        for (int d = rank - 1; d >= 0; --d) {
            const std::int64_t idx = rem % shape[d];
            rem /= shape[d];
            ai += idx * a_stride[d];
            bi += idx * b_stride[d];
        }
        out[flat] = apply_binary(kind, a[ai], b[bi]);
    }
}

void unary_map(UnaryKind kind, const double* x, double* out, std::int64_t n) {
    switch (kind) {
    case UnaryKind::relu:
        for (std::int64_t i = 0; i < n; ++i) {
            out[i] = x[i] > 0.0 ? x[i] : 0.0;
        }
        break;
    case UnaryKind::square:
        for (std::int64_t i = 0; i < n; ++i) {
            out[i] = x[i] * x[i];
        }
        break;
    case UnaryKind::sqrt:
        for (std::int64_t i = 0; i < n; ++i) {
            out[i] = std::sqrt(x[i]);
        }
        break;
    case UnaryKind::clamp01:
        for (std::int64_t i = 0; i < n; ++i) {
            out[i] = x[i] < 0.0 ? 0.0 : (x[i] > 1.0 ? 1.0 : x[i]);
        }
        break;
    }
}

void unary_backward(UnaryKind kind, const double* x, const double* dy, double* dx, std::int64_t n) {
    switch (kind) {
    case UnaryKind::relu:
        for (std::int64_t i = 0; i < n; ++i) {
            if (x[i] > 0.0) {
                dx[i] += dy[i];
            }
        }
        break;
    case UnaryKind::square:
        for (std::int64_t i = 0; i < n; ++i) {
            dx[i] += 2.0 * x[i] * dy[i];
        }
        break;
    case UnaryKind::sqrt:
        // d(sqrt)/dx = 1/(2 sqrt x); at x == 0 the subgradient 0 is used so
        // finite inputs never produce non-finite grads.
        for (std::int64_t i = 0; i < n; ++i) {
            if (x[i] > 0.0) {
                dx[i] += dy[i] / (2.0 * std::sqrt(x[i]));
            }
        }
        break;
    case UnaryKind::clamp01:
        for (std::int64_t i = 0; i < n; ++i) {
            if (x[i] > 0.0 && x[i] < 1.0) {
                dx[i] += dy[i];
            }
        }
        break;
    }
}

void reduce_broadcast_grad(const double* dout, const std::int64_t* out_shape,
                           const std::int64_t* x_shape, int rank, double* dx) {
    std::int64_t x_total = 1;
    for (int d = 0; d < rank; ++d) {
        x_total *= x_shape[d];
    }
    // Per destination element, walk the axes that were broadcast.
    std::int64_t red_total = 1;
    for (int d = 0; d < rank; ++d) {
        if (x_shape[d] == 1 && out_shape[d] != 1) {
            red_total *= out_shape[d];
        }
    }
    std::int64_t out_strides[8];
    std::int64_t s = 1;
    for (int d = rank - 1; d >= 0; --d) {
        out_strides[d] = s;
        s *= out_shape[d];
    }
    for (std::int64_t xi = 0; xi < x_total; ++xi) {
        // Base offset in dout for this x element.
        std::int64_t rem = xi;
        std::int64_t base = 0;
        for (int d = rank - 1; d >= 0; --d) {
            const std::int64_t idx = rem % x_shape[d];
            rem /= x_shape[d];
            base += idx * out_strides[d];
        }
        double acc = 0.0;
        for (std::int64_t r = 0; r < red_total; ++r) {
            std::int64_t rr = r;
            std::int64_t off = 0;
            for (int d = rank - 1; d >= 0; --d) {
                if (x_shape[d] == 1 && out_shape[d] != 1) {
                    const std::int64_t idx = rr % out_shape[d];
                    rr /= out_shape[d];
                    off += idx * out_strides[d];
                }
            }
            acc += dout[base + off];
        }
        dx[xi] += acc;
    }
}

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, const double* b, double* c) {
    // op(A) is (m x k), op(B) is (k x n). Row-major storage: A is (m x k) or
    // (k x m) when transposed, likewise for B.
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p) {
                const double av = trans_a ? a[p * m + i] : a[i * k + p];
                const double bv = trans_b ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    }
}

void conv2d_forward(const ConvGeom& g, const double* x, const double* w, double* y) {
    for (std::int64_t n = 0; n < g.n; ++n) {
        for (std::int64_t co = 0; co < g.c_out; ++co) {
            for (std::int64_t ho = 0; ho < g.h_out; ++ho) {
                for (std::int64_t wo = 0; wo < g.w_out; ++wo) {
                    double acc = 0.0;
                    for (std::int64_t ci = 0; ci < g.c_in; ++ci) {
                        for (std::int64_t kh = 0; kh < g.k; ++kh) {
                            const std::int64_t hi = ho * g.stride - g.pad + kh;
                            if (hi < 0 || hi >= g.h) {
                                continue;
                            }
                            for (std::int64_t kw = 0; kw < g.k; ++kw) {
                                const std::int64_t wi = wo * g.stride - g.pad + kw;
                                if (wi < 0 || wi >= g.w) {
                                    continue;
                                }
                                acc += x[((n * g.c_in + ci) * g.h + hi) * g.w + wi] *
                                       w[((co * g.c_in + ci) * g.k + kh) * g.k + kw];
                            }
                        }
                    }
                    y[((n * g.c_out + co) * g.h_out + ho) * g.w_out + wo] = acc;
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeom& g, const double* w, const double* dy, double* dx) {
    // Gather form: each input element sums the output positions it fed.
    for (std::int64_t n = 0; n < g.n; ++n) {
        for (std::int64_t ci = 0; ci < g.c_in; ++ci) {
            for (std::int64_t hi = 0; hi < g.h; ++hi) {
                for (std::int64_t wi = 0; wi < g.w; ++wi) {
                    double acc = 0.0;
                    for (std::int64_t co = 0; co < g.c_out; ++co) {
                        for (std::int64_t kh = 0; kh < g.k; ++kh) {
                            const std::int64_t ho_num = hi + g.pad - kh;
                            if (ho_num < 0 || ho_num % g.stride != 0) {
                                continue;
                            }
                            const std::int64_t ho = ho_num / g.stride;
                            if (ho >= g.h_out) {
                                continue;
                            }
                            for (std::int64_t kw = 0; kw < g.k; ++kw) {
                                const std::int64_t wo_num = wi + g.pad - kw;
                                if (wo_num < 0 || wo_num % g.stride != 0) {
                                    continue;
                                }
                                const std::int64_t wo = wo_num / g.stride;
                                if (wo >= g.w_out) {
                                    continue;
                                }
                                acc += w[((co * g.c_in + ci) * g.k + kh) * g.k + kw] *
                                       dy[((n * g.c_out + co) * g.h_out + ho) * g.w_out + wo];
                            }
                        }
                    }
                    dx[((n * g.c_in + ci) * g.h + hi) * g.w + wi] += acc;
                }
            }
        }
    }
}

void conv2d_backward_weight(const ConvGeom& g, const double* x, const double* dy, double* dw) {
    for (std::int64_t co = 0; co < g.c_out; ++co) {
        for (std::int64_t ci = 0; ci < g.c_in; ++ci) {
            for (std::int64_t kh = 0; kh < g.k; ++kh) {
                for (std::int64_t kw = 0; kw < g.k; ++kw) {
                    double acc = 0.0;
                    for (std::int64_t n = 0; n < g.n; ++n) {
                        for (std::int64_t ho = 0; ho < g.h_out; ++ho) {
                            const std::int64_t hi = ho * g.stride - g.pad + kh;
                            if (hi < 0 || hi >= g.h) {
                                continue;
                            }
                            for (std::int64_t wo = 0; wo < g.w_out; ++wo) {
                                const std::int64_t wi = wo * g.stride - g.pad + kw;
                                if (wi < 0 || wi >= g.w) {
                                    continue;
                                }
                                acc += x[((n * g.c_in + ci) * g.h + hi) * g.w + wi] *
                                       dy[((n * g.c_out + co) * g.h_out + ho) * g.w_out + wo];
                            }
                        }
                    }
                    dw[((co * g.c_in + ci) * g.k + kh) * g.k + kw] += acc;
                }
            }
        }
    }
}

void haar_pool(const double* x, std::int64_t n, std::int64_t c, std::int64_t h2, std::int64_t w2,
               double* ll, double* lh, double* hl, double* hh, bool accumulate) {
    const std::int64_t h = 2 * h2;
    const std::int64_t w = 2 * w2;
    const auto& kll = HaarFilters::k_ll;
    const auto& klh = HaarFilters::k_lh;
    const auto& khl = HaarFilters::k_hl;
    const auto& khh = HaarFilters::k_hh;
    for (std::int64_t img = 0; img < n * c; ++img) {
        const double* src = x + img * h * w;
        for (std::int64_t i = 0; i < h2; ++i) {
            for (std::int64_t j = 0; j < w2; ++j) {
                const double v00 = src[(2 * i) * w + 2 * j];
                const double v01 = src[(2 * i) * w + 2 * j + 1];
                const double v10 = src[(2 * i + 1) * w + 2 * j];
                const double v11 = src[(2 * i + 1) * w + 2 * j + 1];
                const std::int64_t o = img * h2 * w2 + i * w2 + j;
                const double bll = kll[0] * v00 + kll[1] * v01 + kll[2] * v10 + kll[3] * v11;
                const double blh = klh[0] * v00 + klh[1] * v01 + klh[2] * v10 + klh[3] * v11;
                const double bhl = khl[0] * v00 + khl[1] * v01 + khl[2] * v10 + khl[3] * v11;
                const double bhh = khh[0] * v00 + khh[1] * v01 + khh[2] * v10 + khh[3] * v11;
                if (accumulate) {
                    ll[o] += bll;
                    lh[o] += blh;
                    hl[o] += bhl;
                    hh[o] += bhh;
                } else {
                    ll[o] = bll;
                    lh[o] = blh;
                    hl[o] = bhl;
                    hh[o] = bhh;
                }
            }
        }
    }
}

void haar_unpool(const double* ll, const double* lh, const double* hl, const double* hh,
                 std::int64_t n, std::int64_t c, std::int64_t h2, std::int64_t w2,
                 double* out, bool accumulate) {
    const std::int64_t w = 2 * w2;
    const auto& kll = HaarFilters::k_ll;
    const auto& klh = HaarFilters::k_lh;
    const auto& khl = HaarFilters::k_hl;
    const auto& khh = HaarFilters::k_hh;
    for (std::int64_t img = 0; img < n * c; ++img) {
        double* dst = out + img * (2 * h2) * w;
        for (std::int64_t i = 0; i < h2; ++i) {
            for (std::int64_t j = 0; j < w2; ++j) {
                const std::int64_t o = img * h2 * w2 + i * w2 + j;
                const double bll = ll[o];
                const double blh = lh[o];
                const double bhl = hl[o];
                const double bhh = hh[o];
                for (int q = 0; q < 4; ++q) {
                    const double v = kll[q] * bll + klh[q] * blh + khl[q] * bhl + khh[q] * bhh;
                    double& slot = dst[(2 * i + q / 2) * w + 2 * j + q % 2];
                    if (accumulate) {
                        slot += v;
                    } else {
                        slot = v;
                    }
                }
            }
        }
    }
}

void softmax_rows(const double* x, double* y, std::int64_t rows, std::int64_t cols) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x + r * cols;
        double* yr = y + r * cols;
        double m = xr[0];
        for (std::int64_t j = 1; j < cols; ++j) {
            m = std::max(m, xr[j]);
        }
        double sum = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - m);
            sum += yr[j];
        }
        const double inv = 1.0 / sum;
        for (std::int64_t j = 0; j < cols; ++j) {
            yr[j] *= inv;
        }
    }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::int64_t rows, std::int64_t cols) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* yr = y + r * cols;
        const double* dyr = dy + r * cols;
        double dot = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) {
            dot += yr[j] * dyr[j];
        }
        double* dxr = dx + r * cols;
        for (std::int64_t j = 0; j < cols; ++j) {
            dxr[j] += yr[j] * (dyr[j] - dot);
        }
    }
}

void instance_moments(const double* x, std::int64_t n, std::int64_t c, std::int64_t hw,
                      double eps, double* mean, double* stddev) {
    for (std::int64_t img = 0; img < n * c; ++img) {
        const double* src = x + img * hw;
        double acc = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) {
            acc += src[i];
        }
        const double mu = acc / static_cast<double>(hw);
        double var = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) {
            const double d = src[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(hw);
        mean[img] = mu;
        stddev[img] = std::sqrt(var + eps);
    }
}

void instance_moments_backward(const double* x, const double* mean, const double* stddev,
                               const double* dmean, const double* dstd,
                               std::int64_t n, std::int64_t c, std::int64_t hw, double* dx) {
    // mean: d mu / d x_i = 1/hw
    // std:  d std / d x_i = (x_i - mu) / (hw * std)
    // A zero std (possible only for epsilon == 0) takes subgradient 0.
    const double inv_hw = 1.0 / static_cast<double>(hw);
    for (std::int64_t img = 0; img < n * c; ++img) {
        const double* src = x + img * hw;
        double* dst = dx + img * hw;
        const double gm = dmean[img] * inv_hw;
        const double gs = stddev[img] > 0.0 ? dstd[img] * inv_hw / stddev[img] : 0.0;
        for (std::int64_t i = 0; i < hw; ++i) {
            dst[i] += gm + gs * (src[i] - mean[img]);
        }
    }
}

} // namespace safin::kernels::serial
