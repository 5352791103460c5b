#pragma once

#include "orthoseg/tensor.hpp"

#include <random>

namespace orthoseg {

enum class Mode { train, eval };

template <class S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using VecX = Eigen::Array<S, Eigen::Dynamic, 1>;
template <class S>
using MapMatR = Eigen::Map<MatR<S>>;
template <class S>
using MapConstMatR = Eigen::Map<const MatR<S>>;

namespace detail {

// Patch matrix for a 3x3 kernel with zero padding 1: row (c*3+kh)*3+kw,
// column i*W+j holds x(ni, c, i+kh-1, j+kw-1).
template <class S>
void im2col3(const Tensor<S>& x, int ni, MatR<S>& cols) {
    const int H = x.h, W = x.w;
    for (int c = 0; c < x.c; ++c) {
        const S* src0 = x.data() + (std::int64_t(ni) * x.c + c) * x.plane_size();
        for (int kh = 0; kh < 3; ++kh) {
            for (int kw = 0; kw < 3; ++kw) {
                S* row = cols.data() + std::int64_t((c * 3 + kh) * 3 + kw) * H * W;
                const int dj = kw - 1;
                for (int i = 0; i < H; ++i) {
                    S* dst = row + std::int64_t(i) * W;
                    const int r = i + kh - 1;
                    if (r < 0 || r >= H) {
                        std::fill(dst, dst + W, S(0));
                        continue;
                    }
                    const S* src = src0 + std::int64_t(r) * W;
                    if (dj == 0) {
                        std::copy(src, src + W, dst);
                    } else if (dj == 1) {
                        std::copy(src + 1, src + W, dst);
                        dst[W - 1] = S(0);
                    } else {
                        dst[0] = S(0);
                        std::copy(src, src + W - 1, dst + 1);
                    }
                }
            }
        }
    }
}

template <class S>
void col2im3_add(const MatR<S>& cols, Tensor<S>& dx, int ni) {
    const int H = dx.h, W = dx.w;
    for (int c = 0; c < dx.c; ++c) {
        S* out0 = dx.data() + (std::int64_t(ni) * dx.c + c) * dx.plane_size();
        for (int kh = 0; kh < 3; ++kh) {
            for (int kw = 0; kw < 3; ++kw) {
                const S* row = cols.data() + std::int64_t((c * 3 + kh) * 3 + kw) * H * W;
                const int dj = kw - 1;
                for (int i = 0; i < H; ++i) {
                    const int r = i + kh - 1;
                    if (r < 0 || r >= H)
                        continue;
                    const S* srow = row + std::int64_t(i) * W;
                    S* orow = out0 + std::int64_t(r) * W;
                    const int j0 = std::max(0, -dj);
                    const int j1 = std::min(W, W - dj);
                    for (int j = j0; j < j1; ++j)
                        orow[j + dj] += srow[j];
                }
            }
        }
    }
}

}  // namespace detail

// --- convolutions ------------------------------------------------------------

/// 3x3 cross-correlation, stride 1, zero padding 1 (size preserving).
/// weights: (out_ch, in_ch, 3, 3).
template <class S>
Tensor<S> conv3x3(const Tensor<S>& x, const Tensor<S>& wt, const VecX<S>& bias) {
    if (wt.h != 3 || wt.w != 3) throw Error("conv3x3 weights must be (o,i,3,3)");
    if (wt.c != x.c)
        throw Error("conv3x3 channel mismatch: input " + std::to_string(x.c) +
                    ", weights expect " + std::to_string(wt.c));
    if (bias.size() != wt.n) throw Error("conv3x3 bias length mismatch");

    const int O = wt.n, K = x.c * 9;
    const std::int64_t P = x.plane_size();
    Tensor<S> y(x.n, O, x.h, x.w);
    MatR<S> cols(K, P);
    MapConstMatR<S> WM(wt.data(), O, K);
    for (int ni = 0; ni < x.n; ++ni) {
        detail::im2col3(x, ni, cols);
        MapMatR<S> Y(y.data() + std::int64_t(ni) * O * P, O, P);
        Y.noalias() = WM * cols;
        Y.colwise() += bias.matrix();
    }
    check_finite(y, "conv3x3");
    return y;
}

template <class S>
void conv3x3_backward(const Tensor<S>& x, const Tensor<S>& wt, const Tensor<S>& dy,
                      Tensor<S>* dx, Tensor<S>* dwt, VecX<S>* dbias) {
    const int O = wt.n, K = x.c * 9;
    const std::int64_t P = x.plane_size();
    MatR<S> cols(K, P);
    MapConstMatR<S> WM(wt.data(), O, K);
    if (dwt && !dwt->same_shape(wt)) throw Error("conv3x3_backward dwt shape mismatch");
    for (int ni = 0; ni < x.n; ++ni) {
        MapConstMatR<S> DY(dy.data() + std::int64_t(ni) * O * P, O, P);
        if (dwt || dx) detail::im2col3(x, ni, cols);
        if (dwt) {
            MapMatR<S> DW(dwt->data(), O, K);
            DW.noalias() += DY * cols.transpose();
        }
        if (dbias) *dbias += DY.rowwise().sum().array();
        if (dx) {
            cols.noalias() = WM.transpose() * DY;
            detail::col2im3_add(cols, *dx, ni);
        }
    }
}

/// 1x1 convolution (per-pixel linear map over channels).
/// weights: (out_ch, in_ch, 1, 1).
template <class S>
Tensor<S> conv1x1(const Tensor<S>& x, const Tensor<S>& wt, const VecX<S>& bias) {
    if (wt.h != 1 || wt.w != 1) throw Error("conv1x1 weights must be (o,i,1,1)");
    if (wt.c != x.c)
        throw Error("conv1x1 channel mismatch: input " + std::to_string(x.c) +
                    ", weights expect " + std::to_string(wt.c));
    if (bias.size() != wt.n) throw Error("conv1x1 bias length mismatch");

    const int O = wt.n, C = x.c;
    const std::int64_t P = x.plane_size();
    Tensor<S> y(x.n, O, x.h, x.w);
    MapConstMatR<S> WM(wt.data(), O, C);
    for (int ni = 0; ni < x.n; ++ni) {
        MapConstMatR<S> X(x.data() + std::int64_t(ni) * C * P, C, P);
        MapMatR<S> Y(y.data() + std::int64_t(ni) * O * P, O, P);
        Y.noalias() = WM * X;
        Y.colwise() += bias.matrix();
    }
    check_finite(y, "conv1x1");
    return y;
}

template <class S>
void conv1x1_backward(const Tensor<S>& x, const Tensor<S>& wt, const Tensor<S>& dy,
                      Tensor<S>* dx, Tensor<S>* dwt, VecX<S>* dbias) {
    const int O = wt.n, C = x.c;
    const std::int64_t P = x.plane_size();
    MapConstMatR<S> WM(wt.data(), O, C);
    for (int ni = 0; ni < x.n; ++ni) {
        MapConstMatR<S> X(x.data() + std::int64_t(ni) * C * P, C, P);
        MapConstMatR<S> DY(dy.data() + std::int64_t(ni) * O * P, O, P);
        if (dwt) {
            MapMatR<S> DW(dwt->data(), O, C);
            DW.noalias() += DY * X.transpose();
        }
        if (dbias) *dbias += DY.rowwise().sum().array();
        if (dx) {
            MapMatR<S> DX(dx->data() + std::int64_t(ni) * C * P, C, P);
            DX.noalias() += WM.transpose() * DY;
        }
    }
}

// --- batch normalization -----------------------------------------------------

template <class S>
struct BnContext {
    Tensor<S> xhat;
    VecX<S> invstd;
};

/// Channel-wise batch normalization. Train mode normalizes by the batch's
/// population statistics and folds them into the running estimates with the
/// given momentum; eval mode normalizes by the running estimates.
template <class S>
Tensor<S> batchnorm(const Tensor<S>& x, const VecX<S>& gamma, const VecX<S>& beta,
                    Mode mode, VecX<S>& running_mean, VecX<S>& running_var,
                    double eps, double momentum, BnContext<S>* ctx = nullptr) {
    if (gamma.size() != x.c || beta.size() != x.c ||
        running_mean.size() != x.c || running_var.size() != x.c)
        throw Error("batchnorm parameter length mismatch");

    Tensor<S> y(x.n, x.c, x.h, x.w);
    const std::int64_t P = x.plane_size();
    const double m = static_cast<double>(x.n) * static_cast<double>(P);
    if (ctx && mode == Mode::train) {
        ctx->xhat = Tensor<S>(x.n, x.c, x.h, x.w);
        ctx->invstd.resize(x.c);
    }
    for (int ci = 0; ci < x.c; ++ci) {
        double mean, invstd;
        if (mode == Mode::train) {
            double sum = 0.0, sq = 0.0;
            for (int ni = 0; ni < x.n; ++ni) {
                auto p = x.plane(ni, ci);
                sum += p.template cast<double>().sum();
                sq += p.template cast<double>().square().sum();
            }
            mean = sum / m;
            const double var = std::max(0.0, sq / m - mean * mean);
            invstd = 1.0 / std::sqrt(var + eps);
            running_mean[ci] = static_cast<S>((1.0 - momentum) * running_mean[ci] +
                                              momentum * mean);
            running_var[ci] = static_cast<S>((1.0 - momentum) * running_var[ci] +
                                             momentum * var);
        } else {
            mean = running_mean[ci];
            invstd = 1.0 / std::sqrt(static_cast<double>(running_var[ci]) + eps);
        }
        for (int ni = 0; ni < x.n; ++ni) {
            auto xp = x.plane(ni, ci);
            auto yp = y.plane(ni, ci);
            yp = ((xp - S(mean)) * S(invstd)) * gamma[ci] + beta[ci];
            if (ctx && mode == Mode::train)
                ctx->xhat.plane(ni, ci) = (xp - S(mean)) * S(invstd);
        }
        if (ctx && mode == Mode::train) ctx->invstd[ci] = S(invstd);
    }
    check_finite(y, "batchnorm");
    return y;
}

/// Backward through train-mode batchnorm (gradient flows through the batch
/// statistics). Accumulates into dgamma/dbeta, returns dx.
template <class S>
Tensor<S> batchnorm_backward(const Tensor<S>& dy, const BnContext<S>& ctx,
                             const VecX<S>& gamma, VecX<S>* dgamma, VecX<S>* dbeta) {
    const Tensor<S>& xhat = ctx.xhat;
    Tensor<S> dx(dy.n, dy.c, dy.h, dy.w);
    const double m = static_cast<double>(dy.n) * dy.plane_size();
    for (int ci = 0; ci < dy.c; ++ci) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int ni = 0; ni < dy.n; ++ni) {
            auto dyp = dy.plane(ni, ci);
            auto xp = xhat.plane(ni, ci);
            sum_dy += dyp.template cast<double>().sum();
            sum_dy_xhat += (dyp * xp).template cast<double>().sum();
        }
        if (dgamma) (*dgamma)[ci] += S(sum_dy_xhat);
        if (dbeta) (*dbeta)[ci] += S(sum_dy);
        const S k = S(gamma[ci] * ctx.invstd[ci] / m);
        for (int ni = 0; ni < dy.n; ++ni) {
            auto dyp = dy.plane(ni, ci);
            auto xp = xhat.plane(ni, ci);
            dx.plane(ni, ci) =
                k * (S(m) * dyp - S(sum_dy) - xp * S(sum_dy_xhat));
        }
    }
    return dx;
}

// --- elementwise -------------------------------------------------------------

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> y(x.n, x.c, x.h, x.w);
    y.v = x.v.max(S(0));
    return y;
}

template <class S>
Tensor<S> relu_backward(const Tensor<S>& dy, const Tensor<S>& x) {
    Tensor<S> dx(x.n, x.c, x.h, x.w);
    dx.v = (x.v > S(0)).select(dy.v, S(0));
    return dx;
}

/// Inverted dropout: train mode zeroes with probability p and scales
/// survivors by 1/(1-p); eval mode (or p = 0) is the bit-exact identity.
/// The multiplier mask is written to *mask when given (for backward).
template <class S>
Tensor<S> dropout(const Tensor<S>& x, double p, Mode mode, std::mt19937_64& rng,
                  Tensor<S>* mask = nullptr) {
    if (p < 0.0 || p >= 1.0) throw Error("dropout probability must be in [0,1)");
    if (mode == Mode::eval || p == 0.0) {
        if (mask) {
            *mask = Tensor<S>(x.n, x.c, x.h, x.w);
            mask->v.setConstant(S(1));
        }
        return x;
    }
    const S scale = S(1.0 / (1.0 - p));
    Tensor<S> y(x.n, x.c, x.h, x.w);
    if (mask) *mask = Tensor<S>(x.n, x.c, x.h, x.w);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const S mult = uniform_unit(rng()) >= p ? scale : S(0);
        y.v[i] = x.v[i] * mult;
        if (mask) mask->v[i] = mult;
    }
    return y;
}

// --- pooling -----------------------------------------------------------------

/// Stride-2 max over disjoint 2x2 windows; ties go to the first cell in
/// row-major window order. Argmax offsets are recorded in idx.
template <class S>
Tensor<S> maxpool2x2(const Tensor<S>& x, PoolIndices& idx) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
        throw Error("maxpool2x2 requires even spatial dims, got " + x.shape_string());
    const int oh = x.h / 2, ow = x.w / 2;
    Tensor<S> y(x.n, x.c, oh, ow);
    idx.n = x.n;
    idx.c = x.c;
    idx.h = oh;
    idx.w = ow;
    idx.offset.assign(static_cast<std::size_t>(y.size()), 0);
    std::int64_t out = 0;
    for (int ni = 0; ni < x.n; ++ni) {
        for (int ci = 0; ci < x.c; ++ci) {
            auto xp = x.plane(ni, ci);
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j, ++out) {
                    S best = xp(2 * i, 2 * j);
                    int off = 0;
                    for (int k = 1; k < 4; ++k) {
                        const S v = xp(2 * i + k / 2, 2 * j + k % 2);
                        if (v > best) {
                            best = v;
                            off = k;
                        }
                    }
                    y.v[out] = best;
                    idx.offset[static_cast<std::size_t>(out)] =
                        static_cast<std::uint8_t>(off);
                }
            }
        }
    }
    return y;
}

/// Routes each pooled gradient entirely to its recorded argmax cell.
template <class S>
Tensor<S> maxpool2x2_backward(const Tensor<S>& dy, const PoolIndices& idx) {
    if (dy.n != idx.n || dy.c != idx.c || dy.h != idx.h || dy.w != idx.w)
        throw Error("maxpool2x2_backward shape mismatch");
    Tensor<S> dx(dy.n, dy.c, dy.h * 2, dy.w * 2);
    std::int64_t in = 0;
    for (int ni = 0; ni < dy.n; ++ni) {
        for (int ci = 0; ci < dy.c; ++ci) {
            auto dxp = dx.plane(ni, ci);
            for (int i = 0; i < dy.h; ++i)
                for (int j = 0; j < dy.w; ++j, ++in) {
                    const int off = idx.offset[static_cast<std::size_t>(in)];
                    dxp(2 * i + off / 2, 2 * j + off % 2) = dy.v[in];
                }
        }
    }
    return dx;
}

/// Scatters each value to its recorded argmax position in a 2x spatial grid;
/// every other cell is zero.
template <class S>
Tensor<S> unpool2x2(const Tensor<S>& x, const PoolIndices& idx) {
    if (x.n != idx.n || x.c != idx.c || x.h != idx.h || x.w != idx.w)
        throw Error("unpool2x2 shape mismatch: input " + x.shape_string());
    Tensor<S> y(x.n, x.c, x.h * 2, x.w * 2);
    std::int64_t in = 0;
    for (int ni = 0; ni < x.n; ++ni) {
        for (int ci = 0; ci < x.c; ++ci) {
            auto yp = y.plane(ni, ci);
            for (int i = 0; i < x.h; ++i)
                for (int j = 0; j < x.w; ++j, ++in) {
                    const int off = idx.offset[static_cast<std::size_t>(in)];
                    yp(2 * i + off / 2, 2 * j + off % 2) = x.v[in];
                }
        }
    }
    return y;
}

template <class S>
Tensor<S> unpool2x2_backward(const Tensor<S>& dy, const PoolIndices& idx) {
    Tensor<S> dx(idx.n, idx.c, idx.h, idx.w);
    std::int64_t in = 0;
    for (int ni = 0; ni < idx.n; ++ni) {
        for (int ci = 0; ci < idx.c; ++ci) {
            auto dyp = dy.plane(ni, ci);
            for (int i = 0; i < idx.h; ++i)
                for (int j = 0; j < idx.w; ++j, ++in) {
                    const int off = idx.offset[static_cast<std::size_t>(in)];
                    dx.v[in] = dyp(2 * i + off / 2, 2 * j + off % 2);
                }
        }
    }
    return dx;
}

// --- transposed convolution --------------------------------------------------

/// Stride-2 2x2 transposed convolution; doubles the spatial size. Windows do
/// not overlap, so out(2i+kh, 2j+kw) = sum_ci x(ci,i,j) * wt(ci,co,kh,kw).
/// weights: (in_ch, out_ch, 2, 2).
template <class S>
Tensor<S> transposed_conv2x2(const Tensor<S>& x, const Tensor<S>& wt) {
    if (wt.h != 2 || wt.w != 2) throw Error("transposed_conv2x2 weights must be (i,o,2,2)");
    if (wt.n != x.c)
        throw Error("transposed_conv2x2 channel mismatch: input " + std::to_string(x.c) +
                    ", weights expect " + std::to_string(wt.n));
    const int Ci = x.c, Co = wt.c;
    const std::int64_t P = x.plane_size();
    Tensor<S> y(x.n, Co, x.h * 2, x.w * 2);
    MapConstMatR<S> W4(wt.data(), Ci, Co * 4);
    MatR<S> y4(Co * 4, P);
    for (int ni = 0; ni < x.n; ++ni) {
        MapConstMatR<S> X(x.data() + std::int64_t(ni) * Ci * P, Ci, P);
        y4.noalias() = W4.transpose() * X;
        for (int co = 0; co < Co; ++co) {
            auto yp = y.plane(ni, co);
            for (int kh = 0; kh < 2; ++kh)
                for (int kw = 0; kw < 2; ++kw) {
                    const S* src = y4.data() + std::int64_t((co * 2 + kh) * 2 + kw) * P;
                    for (int i = 0; i < x.h; ++i) {
                        S* dst = yp.data() + std::int64_t(2 * i + kh) * y.w + kw;
                        const S* s = src + std::int64_t(i) * x.w;
                        for (int j = 0; j < x.w; ++j)
                            dst[2 * j] = s[j];
                    }
                }
        }
    }
    check_finite(y, "transposed_conv2x2");
    return y;
}

template <class S>
void transposed_conv2x2_backward(const Tensor<S>& x, const Tensor<S>& wt,
                                 const Tensor<S>& dy, Tensor<S>* dx, Tensor<S>* dwt) {
    const int Ci = x.c, Co = wt.c;
    const std::int64_t P = x.plane_size();
    MapConstMatR<S> W4(wt.data(), Ci, Co * 4);
    MatR<S> dy4(Co * 4, P);
    for (int ni = 0; ni < x.n; ++ni) {
        for (int co = 0; co < Co; ++co) {
            auto dyp = dy.plane(ni, co);
            for (int kh = 0; kh < 2; ++kh)
                for (int kw = 0; kw < 2; ++kw) {
                    S* dst = dy4.data() + std::int64_t((co * 2 + kh) * 2 + kw) * P;
                    for (int i = 0; i < x.h; ++i) {
                        const S* src = dyp.data() + std::int64_t(2 * i + kh) * dy.w + kw;
                        S* d = dst + std::int64_t(i) * x.w;
                        for (int j = 0; j < x.w; ++j)
                            d[j] = src[2 * j];
                    }
                }
        }
        MapConstMatR<S> X(x.data() + std::int64_t(ni) * Ci * P, Ci, P);
        if (dwt) {
            MapMatR<S> DW(dwt->data(), Ci, Co * 4);
            DW.noalias() += X * dy4.transpose();
        }
        if (dx) {
            MapMatR<S> DX(dx->data() + std::int64_t(ni) * Ci * P, Ci, P);
            DX.noalias() += W4 * dy4;
        }
    }
}

// --- channel concatenation ---------------------------------------------------

template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw Error("concat_channels spatial mismatch: " + a.shape_string() + " vs " +
                    b.shape_string());
    Tensor<S> y(a.n, a.c + b.c, a.h, a.w);
    const std::int64_t pa = std::int64_t(a.c) * a.plane_size();
    const std::int64_t pb = std::int64_t(b.c) * b.plane_size();
    for (int ni = 0; ni < a.n; ++ni) {
        std::copy(a.data() + ni * pa, a.data() + (ni + 1) * pa,
                  y.data() + ni * (pa + pb));
        std::copy(b.data() + ni * pb, b.data() + (ni + 1) * pb,
                  y.data() + ni * (pa + pb) + pa);
    }
    return y;
}

/// Splits a concat gradient back into the two operands' gradients.
template <class S>
void split_channels(const Tensor<S>& dy, Tensor<S>& da, Tensor<S>& db) {
    if (dy.c != da.c + db.c) throw Error("split_channels channel mismatch");
    const std::int64_t pa = std::int64_t(da.c) * da.plane_size();
    const std::int64_t pb = std::int64_t(db.c) * db.plane_size();
    for (int ni = 0; ni < dy.n; ++ni) {
        std::copy(dy.data() + ni * (pa + pb), dy.data() + ni * (pa + pb) + pa,
                  da.data() + ni * pa);
        std::copy(dy.data() + ni * (pa + pb) + pa, dy.data() + (ni + 1) * (pa + pb),
                  db.data() + ni * pb);
    }
}

}  // namespace orthoseg
