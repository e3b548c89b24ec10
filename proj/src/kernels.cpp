#include "safin/kernels.hpp"

#include <atomic>

namespace safin::kernels {

namespace {
std::atomic<Mode> g_mode{Mode::parallel};
}

Mode mode() { return g_mode.load(std::memory_order_relaxed); }
void set_mode(Mode m) { g_mode.store(m, std::memory_order_relaxed); }

bool parallel_compiled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

namespace {
inline bool par() { return mode() == Mode::parallel; }
}

double reduce_sum(const double* x, std::int64_t n) {
    return par() ? parallel::reduce_sum(x, n) : serial::reduce_sum(x, n);
}

void axpy(double a, const double* x, double* y, std::int64_t n) {
    par() ? parallel::axpy(a, x, y, n) : serial::axpy(a, x, y, n);
}

void binary_broadcast(BinaryKind kind, const double* a, const std::int64_t* a_stride,
                      const double* b, const std::int64_t* b_stride,
                      double* out, const std::int64_t* shape, int rank) {
    par() ? parallel::binary_broadcast(kind, a, a_stride, b, b_stride, out, shape, rank)
          : serial::binary_broadcast(kind, a, a_stride, b, b_stride, out, shape, rank);
}

void unary_map(UnaryKind kind, const double* x, double* out, std::int64_t n) {
    par() ? parallel::unary_map(kind, x, out, n) : serial::unary_map(kind, x, out, n);
}

void unary_backward(UnaryKind kind, const double* x, const double* dy, double* dx, std::int64_t n) {
    par() ? parallel::unary_backward(kind, x, dy, dx, n)
          : serial::unary_backward(kind, x, dy, dx, n);
}

void reduce_broadcast_grad(const double* dout, const std::int64_t* out_shape,
                           const std::int64_t* x_shape, int rank, double* dx) {
    par() ? parallel::reduce_broadcast_grad(dout, out_shape, x_shape, rank, dx)
          : serial::reduce_broadcast_grad(dout, out_shape, x_shape, rank, dx);
}

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, const double* b, double* c) {
    par() ? parallel::gemm(trans_a, trans_b, m, n, k, a, b, c)
          : serial::gemm(trans_a, trans_b, m, n, k, a, b, c);
}

void conv2d_forward(const ConvGeom& g, const double* x, const double* w, double* y) {
    par() ? parallel::conv2d_forward(g, x, w, y) : serial::conv2d_forward(g, x, w, y);
}

void conv2d_backward_input(const ConvGeom& g, const double* w, const double* dy, double* dx) {
    par() ? parallel::conv2d_backward_input(g, w, dy, dx)
          : serial::conv2d_backward_input(g, w, dy, dx);
}

void conv2d_backward_weight(const ConvGeom& g, const double* x, const double* dy, double* dw) {
    par() ? parallel::conv2d_backward_weight(g, x, dy, dw)
          : serial::conv2d_backward_weight(g, x, dy, dw);
}

void haar_pool(const double* x, std::int64_t n, std::int64_t c, std::int64_t h2, std::int64_t w2,
               double* ll, double* lh, double* hl, double* hh, bool accumulate) {
    par() ? parallel::haar_pool(x, n, c, h2, w2, ll, lh, hl, hh, accumulate)
          : serial::haar_pool(x, n, c, h2, w2, ll, lh, hl, hh, accumulate);
}

void haar_unpool(const double* ll, const double* lh, const double* hl, const double* hh,
                 std::int64_t n, std::int64_t c, std::int64_t h2, std::int64_t w2,
                 double* out, bool accumulate) {
    par() ? parallel::haar_unpool(ll, lh, hl, hh, n, c, h2, w2, out, accumulate)
          : serial::haar_unpool(ll, lh, hl, hh, n, c, h2, w2, out, accumulate);
}

void softmax_rows(const double* x, double* y, std::int64_t rows, std::int64_t cols) {
    par() ? parallel::softmax_rows(x, y, rows, cols) : serial::softmax_rows(x, y, rows, cols);
}

void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::int64_t rows, std::int64_t cols) {
    par() ? parallel::softmax_rows_backward(y, dy, dx, rows, cols)
          : serial::softmax_rows_backward(y, dy, dx, rows, cols);
}

void instance_moments(const double* x, std::int64_t n, std::int64_t c, std::int64_t hw,
                      double eps, double* mean, double* stddev) {
    par() ? parallel::instance_moments(x, n, c, hw, eps, mean, stddev)
          : serial::instance_moments(x, n, c, hw, eps, mean, stddev);
}

void instance_moments_backward(const double* x, const double* mean, const double* stddev,
                               const double* dmean, const double* dstd,
                               std::int64_t n, std::int64_t c, std::int64_t hw, double* dx) {
    par() ? parallel::instance_moments_backward(x, mean, stddev, dmean, dstd, n, c, hw, dx)
          : serial::instance_moments_backward(x, mean, stddev, dmean, dstd, n, c, hw, dx);
}

} // namespace safin::kernels
