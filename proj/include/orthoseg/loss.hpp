#pragma once

#include "orthoseg/tensor.hpp"

namespace orthoseg {

template <class S>
struct LossResult {
    double loss = 0.0;
    Tensor<S> grad;  // d loss / d logits
};

namespace detail {

template <class S>
double sigmoid_d(S z) {
    const double zd = static_cast<double>(z);
    if (zd >= 0.0) return 1.0 / (1.0 + std::exp(-zd));
    const double e = std::exp(zd);
    return e / (1.0 + e);
}

}  // namespace detail

/// Class-weighted binary cross-entropy on logits, mean over all elements:
///   -[ w * y * log sigma(z) + (1-y) * log(1 - sigma(z)) ]
/// evaluated through softplus so large |z| cannot overflow.
template <class S>
LossResult<S> weighted_bce_loss(const Tensor<S>& logits, const Tensor<S>& targets,
                                double pos_weight) {
    if (!logits.same_shape(targets))
        throw Error("loss shape mismatch: " + logits.shape_string() + " vs " +
                    targets.shape_string());
    if (pos_weight <= 0.0) throw Error("pos_weight must be positive");

    LossResult<S> out;
    out.grad = Tensor<S>(logits.n, logits.c, logits.h, logits.w);
    const double count = static_cast<double>(logits.size());
    double acc = 0.0;
    for (std::int64_t i = 0; i < logits.size(); ++i) {
        const double y = static_cast<double>(targets.v[i]);
        if (y != 0.0 && y != 1.0)
            throw Error("loss targets must be binary");
        const double z = static_cast<double>(logits.v[i]);
        // softplus(-z) = max(-z, 0) + log1p(exp(-|z|))
        const double sp = std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
        acc += pos_weight * y * sp + (1.0 - y) * (z + sp);
        const double s = detail::sigmoid_d(z);
        out.grad.v[i] =
            static_cast<S>(((1.0 - y) * s - pos_weight * y * (1.0 - s)) / count);
    }
    out.loss = acc / count;
    if (!std::isfinite(out.loss)) throw Error("non-finite loss");
    return out;
}

}  // namespace orthoseg
