#include "safin/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "safin/kernels.hpp"

namespace safin {

std::int64_t shape_size(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) {
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) {
            os << ',';
        }
        os << s[i];
    }
    os << ')';
    return os.str();
}

namespace {

void check_shape(const Shape& s) {
    for (auto e : s) {
        if (e <= 0) {
            throw std::invalid_argument("tensor shape " + shape_str(s) + " has a non-positive extent");
        }
    }
}

thread_local bool g_grad_enabled = true;

} // namespace

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (shape_size(shape) != static_cast<std::int64_t>(values.size())) {
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    impl_ = std::make_shared<Impl>();
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value), requires_grad);
}

Tensor Tensor::scalar(double value) {
    return Tensor(Shape{1}, std::vector<double>{value});
}

Tensor Tensor::uniform(Shape shape, SplitMix64& rng, double lo, double hi, bool requires_grad) {
    auto n = shape_size(shape);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& e : v) {
        e = rng.uniform(lo, hi);
    }
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor::Impl& Tensor::ref() {
    if (!impl_) {
        throw std::logic_error("use of an undefined tensor");
    }
    return *impl_;
}

const Tensor::Impl& Tensor::ref() const {
    if (!impl_) {
        throw std::logic_error("use of an undefined tensor");
    }
    return *impl_;
}

const Shape& Tensor::shape() const { return ref().shape; }
std::int64_t Tensor::size() const { return static_cast<std::int64_t>(ref().values.size()); }
int Tensor::rank() const { return static_cast<int>(ref().shape.size()); }
bool Tensor::requires_grad() const { return ref().requires_grad; }
void Tensor::set_requires_grad(bool v) { ref().requires_grad = v; }
std::vector<double>& Tensor::values() { return ref().values; }
const std::vector<double>& Tensor::values() const { return ref().values; }
bool Tensor::has_grad() const { return !ref().grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    const auto& g = ref().grad;
    if (g.empty()) {
        throw std::logic_error("tensor has no accumulated gradient");
    }
    return g;
}

void Tensor::zero_grad() { ref().grad.clear(); }

double* Tensor::grad_buffer() {
    auto& impl = ref();
    if (impl.grad.empty()) {
        impl.grad.assign(impl.values.size(), 0.0);
    }
    return impl.grad.data();
}

double Tensor::item() const {
    const auto& v = ref().values;
    if (v.size() != 1) {
        throw std::logic_error("item() requires a single-element tensor, shape is " + shape_str(shape()));
    }
    return v[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
    const auto& impl = ref();
    if (index.size() != impl.shape.size()) {
        throw std::invalid_argument("index rank mismatch");
    }
    std::int64_t flat = 0;
    std::size_t d = 0;
    for (auto i : index) {
        if (i < 0 || i >= impl.shape[d]) {
            throw std::out_of_range("tensor index out of range");
        }
        flat = flat * impl.shape[d] + i;
        ++d;
    }
    return impl.values[static_cast<std::size_t>(flat)];
}

Tape& Tape::active() {
    static thread_local Tape tape;
    return tape;
}

void Tape::record(std::function<void()> step) { steps_.push_back(std::move(step)); }

void Tape::replay_backward_and_clear() {
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
        (*it)();
    }
    steps_.clear();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void require_rank4(const Tensor& x, const char* what) {
    if (x.rank() != 4) {
        throw std::invalid_argument(std::string(what) + ": expected a (N,C,H,W) feature map, got shape " +
                                    shape_str(x.shape()));
    }
}

namespace {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!g_grad_enabled) {
        return false;
    }
    for (const auto* t : inputs) {
        if (t->requires_grad()) {
            return true;
        }
    }
    return false;
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                                    " have different ranks (reshape to align them)");
    }
    Shape out(a.size());
    for (std::size_t d = 0; d < a.size(); ++d) {
        if (a[d] == b[d] || a[d] == 1 || b[d] == 1) {
            out[d] = std::max(a[d], b[d]);
        } else {
            throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                                        " are not broadcast-compatible");
        }
    }
    return out;
}

// Row-major strides of `s` expanded to `out`, with 0 on broadcast axes.
std::vector<std::int64_t> broadcast_strides(const Shape& s, const Shape& out) {
    std::vector<std::int64_t> strides(s.size());
    std::int64_t acc = 1;
    for (int d = static_cast<int>(s.size()) - 1; d >= 0; --d) {
        strides[static_cast<std::size_t>(d)] = (s[static_cast<std::size_t>(d)] == 1 && out[static_cast<std::size_t>(d)] != 1)
                                                   ? 0
                                                   : acc;
        acc *= s[static_cast<std::size_t>(d)];
    }
    return strides;
}

// Shape aligned to out rank (for grad reduction); here ranks already match.
void accumulate_reduced(const std::vector<double>& dout, const Shape& out_shape,
                        Tensor& x) {
    kernels::reduce_broadcast_grad(dout.data(), out_shape.data(), x.shape().data(),
                                   static_cast<int>(out_shape.size()), x.grad_buffer());
}

Tensor binary_op(const char* name, kernels::BinaryKind kind, const Tensor& a, const Tensor& b) {
    const Shape out_shape = broadcast_shape(name, a.shape(), b.shape());
    const auto a_strides = broadcast_strides(a.shape(), out_shape);
    const auto b_strides = broadcast_strides(b.shape(), out_shape);
    Tensor out = Tensor::zeros(out_shape);
    kernels::binary_broadcast(kind, a.values().data(), a_strides.data(),
                              b.values().data(), b_strides.data(),
                              out.values().data(), out_shape.data(),
                              static_cast<int>(out_shape.size()));
    if (should_record({&a, &b})) {
        out.set_requires_grad(true);
        Tensor ac = a;
        Tensor bc = b;
        Tensor oc = out;
        Tape::active().record([ac, bc, oc, kind, out_shape, a_strides, b_strides]() mutable {
            if (!oc.has_grad()) {
                return;
            }
            const auto& dout = oc.grad();
            const int rank = static_cast<int>(out_shape.size());
            const std::int64_t total = shape_size(out_shape);
            switch (kind) {
            case kernels::BinaryKind::add:
                if (ac.requires_grad()) {
                    accumulate_reduced(dout, out_shape, ac);
                }
                if (bc.requires_grad()) {
                    accumulate_reduced(dout, out_shape, bc);
                }
                break;
            case kernels::BinaryKind::sub:
                if (ac.requires_grad()) {
                    accumulate_reduced(dout, out_shape, ac);
                }
                if (bc.requires_grad()) {
                    std::vector<double> tmp(static_cast<std::size_t>(bc.size()), 0.0);
                    kernels::reduce_broadcast_grad(dout.data(), out_shape.data(), bc.shape().data(), rank, tmp.data());
                    kernels::axpy(-1.0, tmp.data(), bc.grad_buffer(), bc.size());
                }
                break;
            case kernels::BinaryKind::mul: {
                const std::vector<std::int64_t> full = broadcast_strides(out_shape, out_shape);
                if (ac.requires_grad()) {
                    std::vector<double> t(static_cast<std::size_t>(total));
                    kernels::binary_broadcast(kernels::BinaryKind::mul, dout.data(), full.data(),
                                              bc.values().data(), b_strides.data(), t.data(), out_shape.data(), rank);
                    kernels::reduce_broadcast_grad(t.data(), out_shape.data(), ac.shape().data(), rank,
                                                   ac.grad_buffer());
                }
                if (bc.requires_grad()) {
                    std::vector<double> t(static_cast<std::size_t>(total));
                    kernels::binary_broadcast(kernels::BinaryKind::mul, dout.data(), full.data(),
                                              ac.values().data(), a_strides.data(), t.data(), out_shape.data(), rank);
                    kernels::reduce_broadcast_grad(t.data(), out_shape.data(), bc.shape().data(), rank,
                                                   bc.grad_buffer());
                }
                break;
            }
            case kernels::BinaryKind::div: {
                const std::vector<std::int64_t> full = broadcast_strides(out_shape, out_shape);
                std::vector<double> t(static_cast<std::size_t>(total));
                // t = dout / b
                kernels::binary_broadcast(kernels::BinaryKind::div, dout.data(), full.data(),
                                          bc.values().data(), b_strides.data(), t.data(), out_shape.data(), rank);
                if (ac.requires_grad()) {
                    kernels::reduce_broadcast_grad(t.data(), out_shape.data(), ac.shape().data(), rank,
                                                   ac.grad_buffer());
                }
                if (bc.requires_grad()) {
                    std::vector<double> t2(static_cast<std::size_t>(total));
                    // t2 = dout * a / b^2
                    kernels::binary_broadcast(kernels::BinaryKind::mul, t.data(), full.data(),
                                              ac.values().data(), a_strides.data(), t2.data(), out_shape.data(), rank);
                    kernels::binary_broadcast(kernels::BinaryKind::div, t2.data(), full.data(),
                                              bc.values().data(), b_strides.data(), t2.data(), out_shape.data(), rank);
                    std::vector<double> red(static_cast<std::size_t>(bc.size()), 0.0);
                    kernels::reduce_broadcast_grad(t2.data(), out_shape.data(), bc.shape().data(), rank, red.data());
                    kernels::axpy(-1.0, red.data(), bc.grad_buffer(), bc.size());
                }
                break;
            }
            }
        });
    }
    return out;
}

Tensor unary_op(const char* name, kernels::UnaryKind kind, const Tensor& x) {
    if (kind == kernels::UnaryKind::sqrt) {
        for (double v : x.values()) {
            if (v < 0.0) {
                throw std::domain_error(std::string(name) + ": negative input " + std::to_string(v));
            }
        }
    }
    Tensor out = Tensor::zeros(x.shape());
    kernels::unary_map(kind, x.values().data(), out.values().data(), x.size());
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x;
        Tensor oc = out;
        Tape::active().record([xc, oc, kind]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) {
                return;
            }
            kernels::unary_backward(kind, xc.values().data(), oc.grad().data(), xc.grad_buffer(), xc.size());
        });
    }
    return out;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", kernels::BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", kernels::BinaryKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", kernels::BinaryKind::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op("div", kernels::BinaryKind::div, a, b); }
Tensor relu(const Tensor& x) { return unary_op("relu", kernels::UnaryKind::relu, x); }
Tensor square(const Tensor& x) { return unary_op("square", kernels::UnaryKind::square, x); }
Tensor sqrt(const Tensor& x) { return unary_op("sqrt", kernels::UnaryKind::sqrt, x); }
Tensor clamp01(const Tensor& x) { return unary_op("clamp01", kernels::UnaryKind::clamp01, x); }

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor* b) {
    const bool binary = (kind == EwKind::add || kind == EwKind::sub || kind == EwKind::mul);
    if (binary && b == nullptr) {
        throw std::invalid_argument("elementwise: binary kind requires a second operand");
    }
    if (!binary && b != nullptr) {
        throw std::invalid_argument("elementwise: unary kind takes a single operand");
    }
    switch (kind) {
    case EwKind::add: return add(a, *b);
    case EwKind::sub: return sub(a, *b);
    case EwKind::mul: return mul(a, *b);
    case EwKind::relu: return relu(a);
    case EwKind::square: return square(a);
    case EwKind::sqrt: return sqrt(a);
    }
    throw std::logic_error("elementwise: unknown kind");
}

Tensor scale(const Tensor& x, double factor) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        ov[i] = factor * xv[i];
    }
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x;
        Tensor oc = out;
        Tape::active().record([xc, oc, factor]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) {
                return;
            }
            kernels::axpy(factor, oc.grad().data(), xc.grad_buffer(), xc.size());
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw std::invalid_argument("matmul: expected rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    }
    const std::int64_t m = a.shape()[0];
    const std::int64_t k = a.shape()[1];
    const std::int64_t p = b.shape()[1];
    if (b.shape()[0] != k) {
        throw std::invalid_argument("matmul: inner extents differ, shapes " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, p});
    kernels::gemm(false, false, m, p, k, a.values().data(), b.values().data(), out.values().data());
    if (should_record({&a, &b})) {
        out.set_requires_grad(true);
        Tensor ac = a;
        Tensor bc = b;
        Tensor oc = out;
        Tape::active().record([ac, bc, oc, m, k, p]() mutable {
            if (!oc.has_grad()) {
                return;
            }
            const auto& dout = oc.grad();
            if (ac.requires_grad()) {
                std::vector<double> da(static_cast<std::size_t>(m * k));
                kernels::gemm(false, true, m, k, p, dout.data(), bc.values().data(), da.data());
                kernels::axpy(1.0, da.data(), ac.grad_buffer(), ac.size());
            }
            if (bc.requires_grad()) {
                std::vector<double> db(static_cast<std::size_t>(k * p));
                kernels::gemm(true, false, k, p, m, ac.values().data(), dout.data(), db.data());
                kernels::axpy(1.0, db.data(), bc.grad_buffer(), bc.size());
            }
        });
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, std::int64_t stride, std::int64_t pad) {
    require_rank4(x, "conv2d input");
    require_rank4(weight, "conv2d weight");
    kernels::ConvGeom g;
    g.n = x.shape()[0];
    g.c_in = x.shape()[1];
    g.h = x.shape()[2];
    g.w = x.shape()[3];
    g.c_out = weight.shape()[0];
    g.k = weight.shape()[2];
    g.stride = stride;
    g.pad = pad;
    if (weight.shape()[1] != g.c_in) {
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(weight.shape()[1]) +
                                    " input channels, input has " + std::to_string(g.c_in));
    }
    if (weight.shape()[3] != g.k || (g.k != 1 && g.k != 2 && g.k != 3)) {
        throw std::invalid_argument("conv2d: kernel must be square with k in {1,2,3}, weight shape is " +
                                    shape_str(weight.shape()));
    }
    if (pad != 0 && pad != 1) {
        throw std::invalid_argument("conv2d: pad must be 0 or 1");
    }
    if (stride < 1) {
        throw std::invalid_argument("conv2d: stride must be positive");
    }
    const std::int64_t h_num = g.h + 2 * pad - g.k;
    const std::int64_t w_num = g.w + 2 * pad - g.k;
    if (h_num < 0 || w_num < 0 || h_num % stride != 0 || w_num % stride != 0) {
        throw std::invalid_argument("conv2d: invalid geometry, input " + shape_str(x.shape()) + " with k=" +
                                    std::to_string(g.k) + " stride=" + std::to_string(stride) + " pad=" +
                                    std::to_string(pad) + " has no integral positive output extent");
    }
    g.h_out = h_num / stride + 1;
    g.w_out = w_num / stride + 1;

    Tensor out = Tensor::zeros({g.n, g.c_out, g.h_out, g.w_out});
    kernels::conv2d_forward(g, x.values().data(), weight.values().data(), out.values().data());
    if (should_record({&x, &weight})) {
        out.set_requires_grad(true);
        Tensor xc = x;
        Tensor wc = weight;
        Tensor oc = out;
        Tape::active().record([xc, wc, oc, g]() mutable {
            if (!oc.has_grad()) {
                return;
            }
            const auto& dout = oc.grad();
            if (xc.requires_grad()) {
                kernels::conv2d_backward_input(g, wc.values().data(), dout.data(), xc.grad_buffer());
            }
            if (wc.requires_grad()) {
                kernels::conv2d_backward_weight(g, xc.values().data(), dout.data(), wc.grad_buffer());
            }
        });
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() != 2) {
        throw std::invalid_argument("softmax_rows: expected a (R,S) tensor, got " + shape_str(x.shape()));
    }
    const std::int64_t rows = x.shape()[0];
    const std::int64_t cols = x.shape()[1];
    Tensor out = Tensor::zeros(x.shape());
    kernels::softmax_rows(x.values().data(), out.values().data(), rows, cols);
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x;
        Tensor oc = out;
        Tape::active().record([xc, oc, rows, cols]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) {
                return;
            }
            kernels::softmax_rows_backward(oc.values().data(), oc.grad().data(), xc.grad_buffer(), rows, cols);
        });
    }
    return out;
}

Moments instance_moments(const Tensor& x, double epsilon) {
    require_rank4(x, "instance_moments");
    if (epsilon < 0.0) {
        throw std::invalid_argument("instance_moments: epsilon must be >= 0");
    }
    const std::int64_t n = x.shape()[0];
    const std::int64_t c = x.shape()[1];
    const std::int64_t hw = x.shape()[2] * x.shape()[3];
    Moments m{Tensor::zeros({n, c}), Tensor::zeros({n, c})};
    kernels::instance_moments(x.values().data(), n, c, hw, epsilon, m.mean.values().data(),
                              m.stddev.values().data());
    if (should_record({&x})) {
        m.mean.set_requires_grad(true);
        m.stddev.set_requires_grad(true);
        Tensor xc = x;
        Tensor mean_c = m.mean;
        Tensor std_c = m.stddev;
        Tape::active().record([xc, mean_c, std_c, n, c, hw]() mutable {
            if (!xc.requires_grad()) {
                return;
            }
            const bool has_mean = mean_c.has_grad();
            const bool has_std = std_c.has_grad();
            if (!has_mean && !has_std) {
                return;
            }
            const std::vector<double> zeros(static_cast<std::size_t>(n * c), 0.0);
            kernels::instance_moments_backward(xc.values().data(), mean_c.values().data(),
                                               std_c.values().data(),
                                               has_mean ? mean_c.grad().data() : zeros.data(),
                                               has_std ? std_c.grad().data() : zeros.data(),
                                               n, c, hw, xc.grad_buffer());
        });
    }
    return m;
}

Tensor reduce_sum(const Tensor& x) {
    Tensor out = Tensor::scalar(kernels::reduce_sum(x.values().data(), x.size()));
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x;
        Tensor oc = out;
        Tape::active().record([xc, oc]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) {
                return;
            }
            const double g = oc.grad()[0];
            double* dx = xc.grad_buffer();
            const std::int64_t n = xc.size();
            for (std::int64_t i = 0; i < n; ++i) {
                dx[i] += g;
            }
        });
    }
    return out;
}

namespace {

// Copy-with-index-map op: out[i] = x[map(i)] where map is a bijection onto a
// subset; backward scatters grads through the same map.
Tensor mapped_copy(const Tensor& x, Shape out_shape,
                   const std::function<std::int64_t(std::int64_t)>& src_index) {
    Tensor out = Tensor::zeros(std::move(out_shape));
    auto& ov = out.values();
    const auto& xv = x.values();
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) {
        ov[static_cast<std::size_t>(i)] = xv[static_cast<std::size_t>(src_index(i))];
    }
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x;
        Tensor oc = out;
        Tape::active().record([xc, oc, src_index, n]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) {
                return;
            }
            const auto& dout = oc.grad();
            double* dx = xc.grad_buffer();
            for (std::int64_t i = 0; i < n; ++i) {
                dx[src_index(i)] += dout[static_cast<std::size_t>(i)];
            }
        });
    }
    return out;
}

} // namespace

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_size(new_shape) != x.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                    shape_str(new_shape));
    }
    return mapped_copy(x, std::move(new_shape), [](std::int64_t i) { return i; });
}

Tensor transpose2d(const Tensor& x) {
    if (x.rank() != 2) {
        throw std::invalid_argument("transpose2d: expected rank 2, got " + shape_str(x.shape()));
    }
    const std::int64_t r = x.shape()[0];
    const std::int64_t c = x.shape()[1];
    return mapped_copy(x, {c, r}, [r, c](std::int64_t i) {
        const std::int64_t row = i / r;
        const std::int64_t col = i % r;
        return col * c + row;
    });
}

Tensor instance_slice(const Tensor& x, std::int64_t n) {
    require_rank4(x, "instance_slice");
    if (n < 0 || n >= x.shape()[0]) {
        throw std::out_of_range("instance_slice: index " + std::to_string(n) + " out of range for " +
                                shape_str(x.shape()));
    }
    const std::int64_t chw = x.shape()[1] * x.shape()[2] * x.shape()[3];
    return mapped_copy(x, {1, x.shape()[1], x.shape()[2], x.shape()[3]},
                       [n, chw](std::int64_t i) { return n * chw + i; });
}

Tensor stack_instances(const std::vector<Tensor>& slices) {
    if (slices.empty()) {
        throw std::invalid_argument("stack_instances: empty input");
    }
    for (const auto& s : slices) {
        require_rank4(s, "stack_instances");
        if (s.shape()[0] != 1 || s.shape() != slices.front().shape()) {
            throw std::invalid_argument("stack_instances: slices must all be (1,C,H,W) of one shape");
        }
    }
    const auto& s0 = slices.front().shape();
    const std::int64_t chw = s0[1] * s0[2] * s0[3];
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(slices.size()), s0[1], s0[2], s0[3]});
    bool rec = false;
    for (const auto& s : slices) {
        rec = rec || s.requires_grad();
    }
    rec = rec && grad_enabled();
    auto& ov = out.values();
    for (std::size_t n = 0; n < slices.size(); ++n) {
        const auto& sv = slices[n].values();
        std::copy(sv.begin(), sv.end(), ov.begin() + static_cast<std::ptrdiff_t>(n * static_cast<std::size_t>(chw)));
    }
    if (rec) {
        out.set_requires_grad(true);
        std::vector<Tensor> sc = slices;
        Tensor oc = out;
        Tape::active().record([sc, oc, chw]() mutable {
            if (!oc.has_grad()) {
                return;
            }
            const auto& dout = oc.grad();
            for (std::size_t n = 0; n < sc.size(); ++n) {
                if (!sc[n].requires_grad()) {
                    continue;
                }
                kernels::axpy(1.0, dout.data() + n * static_cast<std::size_t>(chw), sc[n].grad_buffer(), chw);
            }
        });
    }
    return out;
}

Tensor positions_matrix(const Tensor& x) {
    require_rank4(x, "positions_matrix");
    if (x.shape()[0] != 1) {
        throw std::invalid_argument("positions_matrix: expected a single instance, got " + shape_str(x.shape()));
    }
    const std::int64_t c = x.shape()[1];
    const std::int64_t hw = x.shape()[2] * x.shape()[3];
    // (1,C,H,W) -> (H*W, C): out[p, ch] = x[ch, p]
    return mapped_copy(x, {hw, c}, [c, hw](std::int64_t i) {
        const std::int64_t p = i / c;
        const std::int64_t ch = i % c;
        return ch * hw + p;
    });
}

Tensor feature_from_positions(const Tensor& m, std::int64_t h, std::int64_t w) {
    if (m.rank() != 2 || m.shape()[0] != h * w) {
        throw std::invalid_argument("feature_from_positions: matrix " + shape_str(m.shape()) +
                                    " does not match spatial extents " + std::to_string(h) + "x" +
                                    std::to_string(w));
    }
    const std::int64_t c = m.shape()[1];
    const std::int64_t hw = h * w;
    return mapped_copy(m, {1, c, h, w}, [c, hw](std::int64_t i) {
        const std::int64_t ch = i / hw;
        const std::int64_t p = i % hw;
        return p * c + ch;
    });
}

Tensor expand(const Tensor& x, const Shape& target) {
    const Shape out_shape = broadcast_shape("expand", x.shape(), target);
    if (out_shape != target) {
        throw std::invalid_argument("expand: " + shape_str(x.shape()) + " does not broadcast to " +
                                    shape_str(target));
    }
    const auto x_strides = broadcast_strides(x.shape(), out_shape);
    Tensor zero = Tensor::scalar(0.0);
    const std::vector<std::int64_t> zero_strides(out_shape.size(), 0);
    Tensor out = Tensor::zeros(out_shape);
    kernels::binary_broadcast(kernels::BinaryKind::add, x.values().data(), x_strides.data(),
                              zero.values().data(), zero_strides.data(), out.values().data(),
                              out_shape.data(), static_cast<int>(out_shape.size()));
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x;
        Tensor oc = out;
        Shape os = out_shape;
        Tape::active().record([xc, oc, os]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) {
                return;
            }
            kernels::reduce_broadcast_grad(oc.grad().data(), os.data(), xc.shape().data(),
                                           static_cast<int>(os.size()), xc.grad_buffer());
        });
    }
    return out;
}

void backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, shape is " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw std::invalid_argument("backward: no gradient graph reaches the loss");
    }
    Tensor seed = loss;
    seed.zero_grad();
    seed.grad_buffer()[0] = 1.0;
    Tape::active().replay_backward_and_clear();
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
    Tensor probe(x.shape(), x.values(), true);
    Tape::active().clear();
    Tensor y = f(probe);
    if (y.size() != 1) {
        throw std::invalid_argument("grad_check: f must return a scalar");
    }
    backward(y);
    std::vector<double> analytic(static_cast<std::size_t>(probe.size()), 0.0);
    if (probe.has_grad()) {
        analytic = probe.grad();
    }

    NoGradGuard no_grad;
    double worst = 0.0;
    auto& pv = probe.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double orig = pv[i];
        pv[i] = orig + step;
        const double fp = f(probe).item();
        pv[i] = orig - step;
        const double fm = f(probe).item();
        pv[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

} // namespace safin
