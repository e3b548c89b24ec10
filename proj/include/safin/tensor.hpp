#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "safin/rng.hpp"

namespace safin {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Dense 64-bit float tensor, row-major. Copying a Tensor copies the handle,
// not the storage; ops always allocate fresh outputs. Gradients live next to
// the values and are filled in by backward().
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor uniform(Shape shape, SplitMix64& rng, double lo, double hi,
                          bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::int64_t size() const;
    int rank() const;
    bool requires_grad() const;
    void set_requires_grad(bool v);

    std::vector<double>& values();
    const std::vector<double>& values() const;

    bool has_grad() const;
    const std::vector<double>& grad() const; // throws when no grad has been accumulated
    void zero_grad();
    // Pointer to the grad buffer, allocating zeros on first use.
    double* grad_buffer();

    double item() const; // single-element tensors only
    double at(std::initializer_list<std::int64_t> index) const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Impl {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad; // empty until touched by backward
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;
    Impl& ref();
    const Impl& ref() const;
};

struct Moments {
    Tensor mean;   // (N, C)
    Tensor stddev; // (N, C), sqrt(population variance + epsilon)
};

// Execution-ordered gradient tape, confined to one thread. backward() replays
// it in reverse and clears it; the next forward pass starts a fresh tape.
class Tape {
public:
    static Tape& active();
    void record(std::function<void()> step);
    std::size_t size() const { return steps_.size(); }
    void clear() { steps_.clear(); }
    void replay_backward_and_clear();

private:
    std::vector<std::function<void()>> steps_;
};

bool grad_enabled();

// Disables tape recording in scope (inference paths, numeric differencing).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

enum class EwKind { add, sub, mul, relu, square, sqrt };

// The generic entry point; binary kinds require b, unary kinds forbid it.
Tensor elementwise(EwKind kind, const Tensor& a, const Tensor* b = nullptr);

// Binary ops broadcast over equal-rank shapes where an axis matches or one
// side has extent 1 (reshape first to align ranks).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x); // domain error on negative entries
Tensor scale(const Tensor& x, double factor);
Tensor clamp01(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b); // (M,K) x (K,P)

// Cross-correlation (no kernel flip), NCHW input, (C_out, C_in, k, k) weight,
// k in {1,2,3}, pad in {0,1}; the output extent (H + 2 pad - k)/stride + 1
// must be a positive integer.
Tensor conv2d(const Tensor& x, const Tensor& weight, std::int64_t stride, std::int64_t pad);

Tensor softmax_rows(const Tensor& x); // (R, S), max-subtracted

Moments instance_moments(const Tensor& x, double epsilon); // x is (N,C,H,W)

Tensor reduce_sum(const Tensor& x); // scalar, shape {1}
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor transpose2d(const Tensor& x);
Tensor instance_slice(const Tensor& x, std::int64_t n);     // (N,C,H,W) -> (1,C,H,W)
Tensor stack_instances(const std::vector<Tensor>& slices);  // inverse of the above
Tensor positions_matrix(const Tensor& x);                   // (1,C,H,W) -> (H*W, C)
Tensor feature_from_positions(const Tensor& m, std::int64_t h, std::int64_t w);
Tensor expand(const Tensor& x, const Shape& target);        // broadcast materialize

// Populates grad on every reachable requires_grad tensor with d(loss)/d(t);
// grads accumulate additively across uses. Consumes the active tape.
void backward(const Tensor& loss);

// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)
// with central differences of the given step. f must be a deterministic
// scalar-valued function evaluated away from kinks.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step);

void require_rank4(const Tensor& x, const char* what);

} // namespace safin
