#include "safin/losses.hpp"

#include <stdexcept>

#include "safin/wavelet.hpp"

namespace safin {

Tensor ll_of_tap(const Tensor& feature) {
    return wavelet_pool(feature).ll;
}

Tensor batch_mean_l2(const Tensor& x) {
    const std::int64_t n = x.shape()[0];
    const std::int64_t rest = x.size() / n;
    // Row sums via matmul with a constant ones column keep the whole chain on
    // the tape; sqrt'(0) is taken as 0 so identical inputs stay finite.
    const Tensor sq = reshape(square(x), {n, rest});
    const Tensor ones = Tensor::full({rest, 1}, 1.0);
    const Tensor norms = sqrt(matmul(sq, ones)); // (n, 1)
    return scale(reduce_sum(norms), 1.0 / static_cast<double>(n));
}

Tensor content_loss(const Tensor& tap4_out, const Tensor& tap4_content) {
    if (tap4_out.shape() != tap4_content.shape()) {
        throw std::invalid_argument("content_loss: tap shapes differ, " + shape_str(tap4_out.shape()) +
                                    " vs " + shape_str(tap4_content.shape()));
    }
    return batch_mean_l2(sub(ll_of_tap(tap4_out), ll_of_tap(tap4_content)));
}

StyleLossResult style_loss(const std::array<Tensor, 4>& taps_out,
                           const std::array<Tensor, 4>& taps_style, double epsilon) {
    StyleLossResult r;
    for (std::size_t k = 0; k < 4; ++k) {
        if (taps_out[k].shape()[1] != taps_style[k].shape()[1]) {
            throw std::invalid_argument("style_loss: tap " + std::to_string(k + 1) + " channel extents differ, " +
                                        shape_str(taps_out[k].shape()) + " vs " +
                                        shape_str(taps_style[k].shape()));
        }
        const Moments m_out = instance_moments(ll_of_tap(taps_out[k]), epsilon);
        const Moments m_sty = instance_moments(ll_of_tap(taps_style[k]), epsilon);
        const Tensor term = add(batch_mean_l2(sub(m_out.mean, m_sty.mean)),
                                batch_mean_l2(sub(m_out.stddev, m_sty.stddev)));
        r.layers[k] = term;
        r.total = k == 0 ? term : add(r.total, term);
    }
    return r;
}

Tensor total_loss(const Tensor& content, const Tensor& style, const LossWeights& w) {
    if (w.lambda_s < 0.0) {
        throw std::invalid_argument("total_loss: lambda_s must be >= 0");
    }
    return add(content, scale(style, w.lambda_s));
}

double total_loss(double content, double style, const LossWeights& w) {
    if (w.lambda_s < 0.0) {
        throw std::invalid_argument("total_loss: lambda_s must be >= 0");
    }
    return content + w.lambda_s * style;
}

} // namespace safin
