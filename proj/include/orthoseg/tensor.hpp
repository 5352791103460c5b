#pragma once

#include "orthoseg/common.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace orthoseg {

/// Dense rank-4 array in (batch, channels, height, width) order, stored
/// flat and row-major (w fastest). Scalar type is a template parameter so
/// gradient checks can run the same code at double precision.
template <class S>
struct Tensor {
    using Scalar = S;

    int n = 0, c = 0, h = 0, w = 0;
    Eigen::Array<S, Eigen::Dynamic, 1> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
        if (n < 1 || c < 1 || h < 1 || w < 1)
            throw Error("tensor dimensions must be positive");
        v = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(size());
    }

    static Tensor constant(int n, int c, int h, int w, S value) {
        Tensor t(n, c, h, w);
        t.v.setConstant(value);
        return t;
    }

    std::int64_t size() const {
        return std::int64_t(n) * c * std::int64_t(h) * w;
    }
    std::int64_t plane_size() const { return std::int64_t(h) * w; }

    S* data() { return v.data(); }
    const S* data() const { return v.data(); }

    S& at(int ni, int ci, int hi, int wi) {
        return v[((std::int64_t(ni) * c + ci) * h + hi) * w + wi];
    }
    S at(int ni, int ci, int hi, int wi) const {
        return v[((std::int64_t(ni) * c + ci) * h + hi) * w + wi];
    }

    /// (h x w) view of one channel plane.
    Eigen::Map<GridT<S>> plane(int ni, int ci) {
        return {data() + (std::int64_t(ni) * c + ci) * plane_size(), h, w};
    }
    Eigen::Map<const GridT<S>> plane(int ni, int ci) const {
        return {data() + (std::int64_t(ni) * c + ci) * plane_size(), h, w};
    }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::string shape_string() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

/// Per-window argmax offsets recorded by 2x2 max-pooling; offset in {0..3}
/// indexes the window row-major.
struct PoolIndices {
    int n = 0, c = 0, h = 0, w = 0;  // pooled (output) dims
    std::vector<std::uint8_t> offset;
};

template <class S>
void check_finite(const Tensor<S>& t, const char* what) {
    if (!t.v.isFinite().all())
        throw Error(std::string("non-finite value after ") + what);
}

/// Deterministic scalar draws built on the raw 64-bit stream so results do
/// not depend on the standard library's distribution internals.
inline double uniform_unit(std::uint64_t raw) {
    return static_cast<double>(raw >> 11) * 0x1.0p-53;
}

template <class Rng>
double normal_draw(Rng& rng, double mean, double stddev) {
    // Box-Muller; a fresh pair per call keeps the stream position predictable.
    double u1 = uniform_unit(rng());
    double u2 = uniform_unit(rng());
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) *
                      std::cos(2.0 * M_PI * u2);
}

}  // namespace orthoseg
