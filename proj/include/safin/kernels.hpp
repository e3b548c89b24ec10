#pragma once

#include <cstdint>

// Low-level numeric kernels. Every kernel exists twice: a plain serial
// reference in kernels::serial and an OpenMP version in kernels::parallel.
// The top-level functions dispatch on the active mode.
//
// Both variants are bit-identical by construction: parallel loops only ever
// split work across *output* elements, and the accumulation order within one
// output element is the same fixed order the serial code uses. The only
// whole-array reduction (reduce_sum) uses fixed-size blocks combined in
// block order, so its result is also independent of the mode and of the
// thread count.

namespace safin::kernels {

enum class Mode { serial, parallel };

Mode mode();
void set_mode(Mode m);
bool parallel_compiled(); // built with OpenMP?

// Fixed summation block; keeps serial/parallel reduce_sum bitwise equal.
inline constexpr std::int64_t kReduceBlock = 4096;

enum class BinaryKind { add, sub, mul, div };
enum class UnaryKind { relu, square, sqrt, clamp01 };

struct ConvGeom {
    std::int64_t n{}, c_in{}, h{}, w{};
    std::int64_t c_out{}, k{};
    std::int64_t stride{}, pad{};
    std::int64_t h_out{}, w_out{};
};

// y = a*x + y
void axpy(double a, const double* x, double* y, std::int64_t n);

// Deterministic blocked sum.
double reduce_sum(const double* x, std::int64_t n);

// out[i] = a op b with broadcasting; strides carry 0 on broadcast axes.
void binary_broadcast(BinaryKind kind,
                      const double* a, const std::int64_t* a_stride,
                      const double* b, const std::int64_t* b_stride,
                      double* out, const std::int64_t* shape, int rank);

void unary_map(UnaryKind kind, const double* x, double* out, std::int64_t n);
// dx += dy * d(op)/dx evaluated at x. relu/clamp01 kinks take derivative 0.
void unary_backward(UnaryKind kind, const double* x, const double* dy,
                    double* dx, std::int64_t n);

// dx[j] += sum of dout over every axis where x_shape (aligned to out rank)
// has extent 1 but out_shape does not.
void reduce_broadcast_grad(const double* dout, const std::int64_t* out_shape,
                           const std::int64_t* x_shape, int rank, double* dx);

// c = op(a) * op(b); row-major; c is (m x n) and fully overwritten.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, const double* a, const double* b, double* c);

// Cross-correlation, NCHW, square kernel, no bias.
void conv2d_forward(const ConvGeom& g, const double* x, const double* w, double* y);
void conv2d_backward_input(const ConvGeom& g, const double* w, const double* dy, double* dx);  // accumulates
void conv2d_backward_weight(const ConvGeom& g, const double* x, const double* dy, double* dw); // accumulates

// Orthonormal Haar analysis/synthesis on 2x2 blocks, depthwise.
// h2/w2 are the band extents (input extents / 2). When accumulate is false
// the destination is overwritten, otherwise added into. The pool/unpool pair
// are exact adjoints of each other, so backward(pool) = unpool on the band
// grads and backward(unpool) = pool on the output grad.
void haar_pool(const double* x, std::int64_t n, std::int64_t c,
               std::int64_t h2, std::int64_t w2,
               double* ll, double* lh, double* hl, double* hh, bool accumulate);
void haar_unpool(const double* ll, const double* lh, const double* hl, const double* hh,
                 std::int64_t n, std::int64_t c, std::int64_t h2, std::int64_t w2,
                 double* out, bool accumulate);

// Row-wise softmax with max subtraction.
void softmax_rows(const double* x, double* y, std::int64_t rows, std::int64_t cols);
void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::int64_t rows, std::int64_t cols); // accumulates

// Per (n, c) spatial mean and std = sqrt(population variance + eps).
void instance_moments(const double* x, std::int64_t n, std::int64_t c,
                      std::int64_t hw, double eps, double* mean, double* stddev);
void instance_moments_backward(const double* x, const double* mean, const double* stddev,
                               const double* dmean, const double* dstd,
                               std::int64_t n, std::int64_t c, std::int64_t hw,
                               double* dx); // accumulates

namespace serial {
double reduce_sum(const double* x, std::int64_t n);
void axpy(double a, const double* x, double* y, std::int64_t n);
void binary_broadcast(BinaryKind kind, const double* a, const std::int64_t* a_stride,
                      const double* b, const std::int64_t* b_stride,
                      double* out, const std::int64_t* shape, int rank);
void unary_map(UnaryKind kind, const double* x, double* out, std::int64_t n);
void unary_backward(UnaryKind kind, const double* x, const double* dy, double* dx, std::int64_t n);
void reduce_broadcast_grad(const double* dout, const std::int64_t* out_shape,
                           const std::int64_t* x_shape, int rank, double* dx);
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, const double* b, double* c);
void conv2d_forward(const ConvGeom& g, const double* x, const double* w, double* y);
void conv2d_backward_input(const ConvGeom& g, const double* w, const double* dy, double* dx);
void conv2d_backward_weight(const ConvGeom& g, const double* x, const double* dy, double* dw);
void haar_pool(const double* x, std::int64_t n, std::int64_t c, std::int64_t h2, std::int64_t w2,
               double* ll, double* lh, double* hl, double* hh, bool accumulate);
void haar_unpool(const double* ll, const double* lh, const double* hl, const double* hh,
                 std::int64_t n, std::int64_t c, std::int64_t h2, std::int64_t w2,
                 double* out, bool accumulate);
void softmax_rows(const double* x, double* y, std::int64_t rows, std::int64_t cols);
void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::int64_t rows, std::int64_t cols);
void instance_moments(const double* x, std::int64_t n, std::int64_t c, std::int64_t hw,
                      double eps, double* mean, double* stddev);
void instance_moments_backward(const double* x, const double* mean, const double* stddev,
                               const double* dmean, const double* dstd,
                               std::int64_t n, std::int64_t c, std::int64_t hw, double* dx);
} // namespace serial

namespace parallel {
double reduce_sum(const double* x, std::int64_t n);
void axpy(double a, const double* x, double* y, std::int64_t n);
void binary_broadcast(BinaryKind kind, const double* a, const std::int64_t* a_stride,
                      const double* b, const std::int64_t* b_stride,
                      double* out, const std::int64_t* shape, int rank);
void unary_map(UnaryKind kind, const double* x, double* out, std::int64_t n);
void unary_backward(UnaryKind kind, const double* x, const double* dy, double* dx, std::int64_t n);
void reduce_broadcast_grad(const double* dout, const std::int64_t* out_shape,
                           const std::int64_t* x_shape, int rank, double* dx);
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, const double* b, double* c);
void conv2d_forward(const ConvGeom& g, const double* x, const double* w, double* y);
void conv2d_backward_input(const ConvGeom& g, const double* w, const double* dy, double* dx);
void conv2d_backward_weight(const ConvGeom& g, const double* x, const double* dy, double* dw);
void haar_pool(const double* x, std::int64_t n, std::int64_t c, std::int64_t h2, std::int64_t w2,
               double* ll, double* lh, double* hl, double* hh, bool accumulate);
void haar_unpool(const double* ll, const double* lh, const double* hl, const double* hh,
                 std::int64_t n, std::int64_t c, std::int64_t h2, std::int64_t w2,
                 double* out, bool accumulate);
void softmax_rows(const double* x, double* y, std::int64_t rows, std::int64_t cols);
void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::int64_t rows, std::int64_t cols);
void instance_moments(const double* x, std::int64_t n, std::int64_t c, std::int64_t hw,
                      double eps, double* mean, double* stddev);
void instance_moments_backward(const double* x, const double* mean, const double* stddev,
                               const double* dmean, const double* dstd,
                               std::int64_t n, std::int64_t c, std::int64_t hw, double* dx);
} // namespace parallel

} // namespace safin::kernels
