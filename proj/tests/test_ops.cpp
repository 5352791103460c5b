#include <doctest.h>

#include "orthoseg/loss.hpp"
#include "orthoseg/ops.hpp"
#include "orthoseg/optim.hpp"

#include "fd_check.hpp"

#include <random>

using namespace orthoseg;

namespace {

template <class S>
Tensor<S> random_tensor(int n, int c, int h, int w, unsigned seed, double lo = -2.0,
                        double hi = 2.0) {
    Tensor<S> t(n, c, h, w);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (std::int64_t i = 0; i < t.size(); ++i)
        t.v[i] = static_cast<S>(u(rng));
    return t;
}

template <class S>
VecX<S> random_vec(int n, unsigned seed, double lo = -1.0, double hi = 1.0) {
    VecX<S> v(n);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (int i = 0; i < n; ++i)
        v[i] = static_cast<S>(u(rng));
    return v;
}

// Projection of a tensor onto fixed random coefficients: the scalar loss all
// gradient checks differentiate.
template <class S>
double project(const Tensor<S>& y, const Tensor<S>& u) {
    return static_cast<double>((y.v.template cast<double>() *
                                u.v.template cast<double>())
                                   .sum());
}

}  // namespace

// --- conv3x3 -----------------------------------------------------------------

TEST_CASE("conv3x3 identity kernel reproduces the input") {
    auto x = random_tensor<float>(1, 1, 5, 5, 1);
    Tensor<float> w(1, 1, 3, 3);
    w.at(0, 0, 1, 1) = 1.0f;
    VecX<float> b = VecX<float>::Zero(1);
    auto y = conv3x3(x, w, b);
    CHECK((y.v == x.v).all());
}

TEST_CASE("all-ones conv3x3 equals the local window sum") {
    auto x = random_tensor<double>(1, 1, 5, 5, 2);
    Tensor<double> w = Tensor<double>::constant(1, 1, 3, 3, 1.0);
    VecX<double> b = VecX<double>::Zero(1);
    auto y = conv3x3(x, w, b);
    // Independent direct evaluation, zero padding at the border.
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            double want = 0;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    int r = i + di, c = j + dj;
                    if (r >= 0 && r < 5 && c >= 0 && c < 5)
                        want += x.at(0, 0, r, c);
                }
            CHECK(y.at(0, 0, i, j) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("conv3x3 gradients match finite differences at double precision") {
    auto x = random_tensor<double>(1, 2, 6, 6, 3);
    auto w = random_tensor<double>(3, 2, 3, 3, 4);
    auto b = random_vec<double>(3, 5);
    auto u = random_tensor<double>(1, 3, 6, 6, 6);

    auto loss = [&] { return project(conv3x3(x, w, b), u); };

    Tensor<double> dx(1, 2, 6, 6), dw(3, 2, 3, 3);
    VecX<double> db = VecX<double>::Zero(3);
    conv3x3_backward(x, w, u, &dx, &dw, &db);

    CHECK(max_rel_err_vs_fd(x.v, dx.v, loss, 1e-5) < 1e-6);
    CHECK(max_rel_err_vs_fd(w.v, dw.v, loss, 1e-5) < 1e-6);
    CHECK(max_rel_err_vs_fd(b, db, loss, 1e-5) < 1e-6);
}

TEST_CASE("conv3x3 gradients hold at 32-bit precision") {
    auto x = random_tensor<float>(1, 2, 6, 6, 7);
    auto w = random_tensor<float>(2, 2, 3, 3, 8);
    auto b = random_vec<float>(2, 9);
    auto u = random_tensor<float>(1, 2, 6, 6, 10);
    auto loss = [&] { return project(conv3x3(x, w, b), u); };

    Tensor<float> dx(1, 2, 6, 6), dw(2, 2, 3, 3);
    VecX<float> db = VecX<float>::Zero(2);
    conv3x3_backward(x, w, u, &dx, &dw, &db);

    CHECK(max_rel_err_vs_fd(w.v, dw.v, loss, 1e-2) < 1e-3);
    CHECK(max_rel_err_vs_fd(x.v, dx.v, loss, 1e-2) < 1e-3);
}

TEST_CASE("conv3x3 rejects mismatched channels") {
    auto x = random_tensor<float>(1, 3, 4, 4, 11);
    auto w = random_tensor<float>(2, 2, 3, 3, 12);
    VecX<float> b = VecX<float>::Zero(2);
    CHECK_THROWS_AS(conv3x3(x, w, b), Error);
}

// --- conv1x1 -----------------------------------------------------------------

TEST_CASE("conv1x1 identity and per-pixel dot product") {
    auto x = random_tensor<float>(1, 2, 3, 3, 13);
    Tensor<float> eye(2, 2, 1, 1);
    eye.at(0, 0, 0, 0) = 1.0f;
    eye.at(1, 1, 0, 0) = 1.0f;
    VecX<float> b0 = VecX<float>::Zero(2);
    auto y = conv1x1(x, eye, b0);
    CHECK((y.v == x.v).all());

    Tensor<float> w(1, 2, 1, 1);
    w.at(0, 0, 0, 0) = 0.5f;
    w.at(0, 1, 0, 0) = -2.0f;
    VecX<float> b(1);
    b << 0.25f;
    auto z = conv1x1(x, w, b);
    CHECK(z.h == x.h);
    CHECK(z.w == x.w);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(z.at(0, 0, i, j) ==
                  doctest::Approx(0.5f * x.at(0, 0, i, j) - 2.0f * x.at(0, 1, i, j) + 0.25f)
                      .epsilon(1e-6));
}

TEST_CASE("conv1x1 gradients match finite differences") {
    auto x = random_tensor<double>(2, 3, 4, 4, 14);
    auto w = random_tensor<double>(2, 3, 1, 1, 15);
    auto b = random_vec<double>(2, 16);
    auto u = random_tensor<double>(2, 2, 4, 4, 17);
    auto loss = [&] { return project(conv1x1(x, w, b), u); };

    Tensor<double> dx(2, 3, 4, 4), dw(2, 3, 1, 1);
    VecX<double> db = VecX<double>::Zero(2);
    conv1x1_backward(x, w, u, &dx, &dw, &db);

    CHECK(max_rel_err_vs_fd(x.v, dx.v, loss, 1e-5) < 1e-6);
    CHECK(max_rel_err_vs_fd(w.v, dw.v, loss, 1e-5) < 1e-6);
    CHECK(max_rel_err_vs_fd(b, db, loss, 1e-5) < 1e-6);
}

// --- batchnorm ---------------------------------------------------------------

TEST_CASE("batchnorm train mode normalizes per channel") {
    auto x = random_tensor<double>(4, 3, 6, 6, 18, -3.0, 5.0);
    VecX<double> gamma = VecX<double>::Ones(3), beta = VecX<double>::Zero(3);
    VecX<double> rm = VecX<double>::Zero(3), rv = VecX<double>::Ones(3);
    auto y = batchnorm(x, gamma, beta, Mode::train, rm, rv, 1e-5, 0.1);
    for (int ci = 0; ci < 3; ++ci) {
        double sum = 0, sq = 0;
        for (int ni = 0; ni < 4; ++ni) {
            sum += y.plane(ni, ci).sum();
            sq += y.plane(ni, ci).square().sum();
        }
        const double m = 4.0 * 36.0;
        CHECK(std::abs(sum / m) < 1e-10);
        CHECK(std::abs(sq / m - 1.0) < 1e-4);  // eps shifts variance slightly
    }
}

TEST_CASE("batchnorm affine parameters shift and scale") {
    auto x = random_tensor<double>(2, 1, 8, 8, 19);
    VecX<double> gamma(1), beta(1);
    gamma << 2.0;
    beta << 3.0;
    VecX<double> rm = VecX<double>::Zero(1), rv = VecX<double>::Ones(1);
    auto y = batchnorm(x, gamma, beta, Mode::train, rm, rv, 1e-5, 0.1);
    double sum = 0, sq = 0;
    for (int ni = 0; ni < 2; ++ni) {
        sum += y.plane(ni, 0).sum();
        sq += y.plane(ni, 0).square().sum();
    }
    const double m = 2 * 64.0;
    const double mean = sum / m;
    CHECK(mean == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(std::sqrt(sq / m - mean * mean) == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("batchnorm eval mode uses running statistics") {
    auto x = random_tensor<double>(1, 2, 4, 4, 20);
    VecX<double> gamma = VecX<double>::Ones(2), beta = VecX<double>::Zero(2);
    VecX<double> rm(2), rv(2);
    rm << 1.0, -2.0;
    rv << 4.0, 0.25;
    auto y = batchnorm(x, gamma, beta, Mode::eval, rm, rv, 0.0, 0.1);
    for (int ci = 0; ci < 2; ++ci)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                CHECK(y.at(0, ci, i, j) ==
                      doctest::Approx((x.at(0, ci, i, j) - rm[ci]) / std::sqrt(rv[ci]))
                          .epsilon(1e-10));
    // Eval mode must not touch the running stats.
    CHECK(rm[0] == 1.0);
    CHECK(rv[1] == 0.25);
}

TEST_CASE("batchnorm gradients match finite differences") {
    auto x = random_tensor<double>(2, 3, 4, 4, 21);
    auto gamma = random_vec<double>(3, 22, 0.5, 2.0);
    auto beta = random_vec<double>(3, 23);
    auto u = random_tensor<double>(2, 3, 4, 4, 24);

    auto loss = [&] {
        VecX<double> rm = VecX<double>::Zero(3), rv = VecX<double>::Ones(3);
        return project(batchnorm(x, gamma, beta, Mode::train, rm, rv, 1e-5, 0.1), u);
    };

    VecX<double> rm = VecX<double>::Zero(3), rv = VecX<double>::Ones(3);
    BnContext<double> ctx;
    batchnorm(x, gamma, beta, Mode::train, rm, rv, 1e-5, 0.1, &ctx);
    VecX<double> dgamma = VecX<double>::Zero(3), dbeta = VecX<double>::Zero(3);
    auto dx = batchnorm_backward(u, ctx, gamma, &dgamma, &dbeta);

    CHECK(max_rel_err_vs_fd(x.v, dx.v, loss, 1e-5) < 1e-6);
    CHECK(max_rel_err_vs_fd(gamma, dgamma, loss, 1e-5) < 1e-6);
    CHECK(max_rel_err_vs_fd(beta, dbeta, loss, 1e-5) < 1e-6);
}

TEST_CASE("batchnorm 32-bit gradient check") {
    auto x = random_tensor<float>(2, 2, 4, 4, 25);
    auto gamma = random_vec<float>(2, 26, 0.5, 2.0);
    auto beta = random_vec<float>(2, 27);
    auto u = random_tensor<float>(2, 2, 4, 4, 28);
    auto loss = [&] {
        VecX<float> rm = VecX<float>::Zero(2), rv = VecX<float>::Ones(2);
        return project(batchnorm(x, gamma, beta, Mode::train, rm, rv, 1e-5, 0.1), u);
    };
    VecX<float> rm = VecX<float>::Zero(2), rv = VecX<float>::Ones(2);
    BnContext<float> ctx;
    batchnorm(x, gamma, beta, Mode::train, rm, rv, 1e-5, 0.1, &ctx);
    VecX<float> dgamma = VecX<float>::Zero(2), dbeta = VecX<float>::Zero(2);
    auto dx = batchnorm_backward(u, ctx, gamma, &dgamma, &dbeta);
    CHECK(max_rel_err_vs_fd(gamma, dgamma, loss, 1e-2) < 1e-3);
    CHECK(max_rel_err_vs_fd(x.v, dx.v, loss, 1e-2) < 2e-3);
}

TEST_CASE("batchnorm running stats blend with momentum") {
    Tensor<double> x = Tensor<double>::constant(1, 1, 2, 2, 6.0);
    x.at(0, 0, 1, 1) = 10.0;  // mean 7, population var 3
    VecX<double> gamma = VecX<double>::Ones(1), beta = VecX<double>::Zero(1);
    VecX<double> rm = VecX<double>::Zero(1), rv = VecX<double>::Ones(1);
    batchnorm(x, gamma, beta, Mode::train, rm, rv, 1e-5, 0.1);
    CHECK(rm[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 7.0).epsilon(1e-12));
    CHECK(rv[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 3.0).epsilon(1e-12));
}

// --- relu / dropout ----------------------------------------------------------

TEST_CASE("relu clamps negatives") {
    Tensor<float> x(1, 1, 1, 3);
    x.v << -1.0f, 0.0f, 2.0f;
    auto y = relu(x);
    CHECK(y.v[0] == 0.0f);
    CHECK(y.v[1] == 0.0f);
    CHECK(y.v[2] == 2.0f);

    Tensor<float> dy(1, 1, 1, 3);
    dy.v << 5.0f, 5.0f, 5.0f;
    auto dx = relu_backward(dy, x);
    CHECK(dx.v[0] == 0.0f);
    CHECK(dx.v[1] == 0.0f);  // subgradient 0 at the kink
    CHECK(dx.v[2] == 5.0f);
}

TEST_CASE("dropout degenerate and eval modes are identities") {
    auto x = random_tensor<float>(1, 2, 4, 4, 29);
    std::mt19937_64 rng(1);
    auto y0 = dropout(x, 0.0, Mode::train, rng);
    CHECK((y0.v == x.v).all());
    auto ye = dropout(x, 0.7, Mode::eval, rng);
    CHECK((ye.v == x.v).all());
}

TEST_CASE("dropout zeroes and rescales survivors") {
    auto x = random_tensor<double>(1, 1, 32, 32, 30, 0.5, 1.5);
    std::mt19937_64 rng(42);
    Tensor<double> mask;
    auto y = dropout(x, 0.5, Mode::train, rng, &mask);
    std::int64_t zeros = 0;
    for (std::int64_t i = 0; i < y.size(); ++i) {
        if (y.v[i] == 0.0) {
            ++zeros;
            CHECK(mask.v[i] == 0.0);
        } else {
            CHECK(y.v[i] == doctest::Approx(2.0 * x.v[i]).epsilon(1e-12));
            CHECK(mask.v[i] == 2.0);
        }
    }
    const double frac = static_cast<double>(zeros) / static_cast<double>(y.size());
    CHECK(frac > 0.4);
    CHECK(frac < 0.6);

    // Same seed, same mask.
    std::mt19937_64 rng2(42);
    auto y2 = dropout(x, 0.5, Mode::train, rng2);
    CHECK((y2.v == y.v).all());
}

// --- pooling -----------------------------------------------------------------

TEST_CASE("maxpool picks the window max and records the offset") {
    Tensor<float> x(1, 1, 2, 2);
    x.v << 1, 2, 3, 4;
    PoolIndices idx;
    auto y = maxpool2x2(x, idx);
    CHECK(y.v[0] == 4.0f);
    CHECK(idx.offset[0] == 3);

    Tensor<float> c = Tensor<float>::constant(1, 1, 2, 2, 5.0f);
    auto yc = maxpool2x2(c, idx);
    CHECK(yc.v[0] == 5.0f);
    CHECK(idx.offset[0] == 0);  // tie goes to the first cell

    Tensor<float> odd(1, 1, 3, 4);
    CHECK_THROWS_AS(maxpool2x2(odd, idx), Error);
}

TEST_CASE("maxpool gradient routes to the argmax cell") {
    auto x = random_tensor<double>(1, 1, 4, 4, 31);
    PoolIndices idx;
    auto u = random_tensor<double>(1, 1, 2, 2, 32);
    auto loss = [&] {
        PoolIndices tmp;
        return project(maxpool2x2(x, tmp), u);
    };
    maxpool2x2(x, idx);
    auto dx = maxpool2x2_backward(u, idx);
    CHECK(max_rel_err_vs_fd(x.v, dx.v, loss, 1e-6) < 1e-6);
    // Exactly four nonzero entries, one per window.
    int nonzero = 0;
    for (std::int64_t i = 0; i < dx.size(); ++i)
        if (dx.v[i] != 0.0)
            ++nonzero;
    CHECK(nonzero == 4);
}

TEST_CASE("unpool scatters to the recorded positions") {
    auto x = random_tensor<float>(1, 2, 4, 4, 33);
    PoolIndices idx;
    auto pooled = maxpool2x2(x, idx);
    auto up = unpool2x2(pooled, idx);
    CHECK(up.h == 4);
    CHECK(up.w == 4);
    // Max of each window sits at its original argmax position, zeros elsewhere.
    for (int ci = 0; ci < 2; ++ci)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const std::size_t k = static_cast<std::size_t>(((0 * 2 + ci) * 2 + i) * 2 + j);
                const int off = idx.offset[k];
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj) {
                        const float v = up.at(0, ci, 2 * i + di, 2 * j + dj);
                        if (di == off / 2 && dj == off % 2)
                            CHECK(v == pooled.at(0, ci, i, j));
                        else
                            CHECK(v == 0.0f);
                    }
            }
    // Scatter preserves mass.
    CHECK(up.v.sum() == doctest::Approx(pooled.v.sum()).epsilon(1e-6));

    // All offsets 0: values land top-left.
    PoolIndices tl = idx;
    std::fill(tl.offset.begin(), tl.offset.end(), std::uint8_t{0});
    auto up0 = unpool2x2(pooled, tl);
    CHECK(up0.at(0, 0, 0, 0) == pooled.at(0, 0, 0, 0));
    CHECK(up0.at(0, 0, 0, 1) == 0.0f);

    PoolIndices wrong = idx;
    wrong.w = 3;
    CHECK_THROWS_AS(unpool2x2(pooled, wrong), Error);
}

TEST_CASE("unpool gradient gathers from the scattered positions") {
    auto x = random_tensor<double>(1, 2, 2, 2, 34);
    PoolIndices idx;
    idx.n = 1;
    idx.c = 2;
    idx.h = 2;
    idx.w = 2;
    idx.offset = {3, 0, 1, 2, 2, 1, 0, 3};
    auto u = random_tensor<double>(1, 2, 4, 4, 35);
    auto loss = [&] { return project(unpool2x2(x, idx), u); };
    auto dx = unpool2x2_backward(u, idx);
    CHECK(max_rel_err_vs_fd(x.v, dx.v, loss, 1e-6) < 1e-6);
}

// --- transposed convolution --------------------------------------------------

TEST_CASE("transposed conv expands a single pixel by the kernel") {
    Tensor<double> x(1, 1, 1, 1);
    x.v << 3.0;
    Tensor<double> w(1, 1, 2, 2);
    w.v << 0.5, -1.0, 2.0, 0.25;  // [[a,b],[c,d]]
    auto y = transposed_conv2x2(x, w);
    REQUIRE(y.h == 2);
    REQUIRE(y.w == 2);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(1.5));
    CHECK(y.at(0, 0, 0, 1) == doctest::Approx(-3.0));
    CHECK(y.at(0, 0, 1, 0) == doctest::Approx(6.0));
    CHECK(y.at(0, 0, 1, 1) == doctest::Approx(0.75));

    Tensor<double> zero(1, 1, 3, 3);
    CHECK((transposed_conv2x2(zero, w).v == 0.0).all());
}

TEST_CASE("transposed conv gradients match finite differences") {
    auto x = random_tensor<double>(2, 3, 3, 3, 36);
    auto w = random_tensor<double>(3, 2, 2, 2, 37);
    auto u = random_tensor<double>(2, 2, 6, 6, 38);
    auto loss = [&] { return project(transposed_conv2x2(x, w), u); };
    Tensor<double> dx(2, 3, 3, 3), dw(3, 2, 2, 2);
    transposed_conv2x2_backward(x, w, u, &dx, &dw);
    CHECK(max_rel_err_vs_fd(x.v, dx.v, loss, 1e-5) < 1e-6);
    CHECK(max_rel_err_vs_fd(w.v, dw.v, loss, 1e-5) < 1e-6);

    auto bad = random_tensor<double>(1, 2, 3, 3, 39);
    CHECK_THROWS_AS(transposed_conv2x2(bad, w), Error);
}

TEST_CASE("transposed conv 32-bit gradient check") {
    auto x = random_tensor<float>(1, 2, 3, 3, 40);
    auto w = random_tensor<float>(2, 2, 2, 2, 41);
    auto u = random_tensor<float>(1, 2, 6, 6, 42);
    auto loss = [&] { return project(transposed_conv2x2(x, w), u); };
    Tensor<float> dx(1, 2, 3, 3), dw(2, 2, 2, 2);
    transposed_conv2x2_backward(x, w, u, &dx, &dw);
    CHECK(max_rel_err_vs_fd(w.v, dw.v, loss, 1e-2) < 1e-3);
}

// --- concat ------------------------------------------------------------------

TEST_CASE("concat stacks channels a-first") {
    auto a = random_tensor<float>(1, 4, 8, 8, 43);
    auto b = random_tensor<float>(1, 4, 8, 8, 44);
    auto y = concat_channels(a, b);
    CHECK(y.c == 8);
    CHECK(y.at(0, 0, 3, 3) == a.at(0, 0, 3, 3));
    CHECK(y.at(0, 4, 3, 3) == b.at(0, 0, 3, 3));

    auto c = random_tensor<float>(1, 4, 7, 8, 45);
    CHECK_THROWS_AS(concat_channels(a, c), Error);
}

TEST_CASE("conv on concat(x, zeros) with a masked kernel equals conv(x)") {
    auto x = random_tensor<double>(1, 2, 5, 5, 46);
    Tensor<double> zeros(1, 2, 5, 5);
    auto xz = concat_channels(x, zeros);
    auto w = random_tensor<double>(3, 2, 3, 3, 47);
    auto b = random_vec<double>(3, 48);
    // Kernel reading only the first two channels.
    Tensor<double> w4(3, 4, 3, 3);
    for (int o = 0; o < 3; ++o)
        for (int ci = 0; ci < 2; ++ci)
            for (int kh = 0; kh < 3; ++kh)
                for (int kw = 0; kw < 3; ++kw)
                    w4.at(o, ci, kh, kw) = w.at(o, ci, kh, kw);
    auto y1 = conv3x3(x, w, b);
    auto y2 = conv3x3(xz, w4, b);
    CHECK(((y1.v - y2.v).abs() < 1e-12).all());
}

TEST_CASE("concat gradient splits exactly") {
    auto a = random_tensor<double>(2, 3, 4, 4, 49);
    auto b = random_tensor<double>(2, 2, 4, 4, 50);
    auto u = random_tensor<double>(2, 5, 4, 4, 51);
    auto loss = [&] { return project(concat_channels(a, b), u); };
    Tensor<double> da(2, 3, 4, 4), db(2, 2, 4, 4);
    split_channels(u, da, db);
    CHECK(max_rel_err_vs_fd(a.v, da.v, loss, 1e-6) < 1e-6);
    CHECK(max_rel_err_vs_fd(b.v, db.v, loss, 1e-6) < 1e-6);
}

// --- loss --------------------------------------------------------------------

TEST_CASE("weighted bce at the decision point") {
    Tensor<double> z(1, 1, 1, 1), y1(1, 1, 1, 1), y0(1, 1, 1, 1);
    y1.v << 1.0;
    // pos_weight 1, z=0, y=1 -> ln 2
    CHECK(weighted_bce_loss(z, y1, 1.0).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // pos_weight 5 scales the positive term only
    CHECK(weighted_bce_loss(z, y1, 5.0).loss ==
          doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(weighted_bce_loss(z, y0, 5.0).loss ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("weighted bce with pos_weight 1 is plain bce") {
    auto z = random_tensor<double>(1, 1, 4, 4, 52, -3.0, 3.0);
    Tensor<double> y(1, 1, 4, 4);
    std::mt19937 rng(53);
    for (std::int64_t i = 0; i < y.size(); ++i)
        y.v[i] = (rng() & 1) ? 1.0 : 0.0;
    const double got = weighted_bce_loss(z, y, 1.0).loss;
    double want = 0.0;
    for (std::int64_t i = 0; i < z.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-z.v[i]));
        want += -(y.v[i] * std::log(s) + (1.0 - y.v[i]) * std::log(1.0 - s));
    }
    want /= static_cast<double>(z.size());
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("weighted bce survives extreme logits") {
    Tensor<double> z(1, 1, 1, 2), y(1, 1, 1, 2);
    z.v << 500.0, -500.0;
    y.v << 0.0, 1.0;
    auto r = weighted_bce_loss(z, y, 5.0);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx((500.0 + 5.0 * 500.0) / 2.0).epsilon(1e-9));
}

TEST_CASE("weighted bce gradient matches finite differences") {
    auto z = random_tensor<double>(2, 1, 3, 3, 54, -2.5, 2.5);
    Tensor<double> y(2, 1, 3, 3);
    std::mt19937 rng(55);
    for (std::int64_t i = 0; i < y.size(); ++i)
        y.v[i] = (rng() & 1) ? 1.0 : 0.0;
    auto loss = [&] { return weighted_bce_loss(z, y, 5.0).loss; };
    auto g = weighted_bce_loss(z, y, 5.0).grad;
    CHECK(max_rel_err_vs_fd(z.v, g.v, loss, 1e-6) < 1e-8);
}

TEST_CASE("weighted bce input validation") {
    Tensor<float> z(1, 1, 2, 2), bad(1, 1, 2, 2), other(1, 1, 2, 3);
    bad.v << 0.0f, 1.0f, 0.5f, 0.0f;
    CHECK_THROWS_AS(weighted_bce_loss(z, bad, 5.0), Error);
    CHECK_THROWS_AS(weighted_bce_loss(z, other, 5.0), Error);
}

// --- optimizer ---------------------------------------------------------------

TEST_CASE("decoupled decay shrinks parameters geometrically under zero gradient") {
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    AdamW<double> opt(cfg);
    std::map<std::string, Tensor<double>> params, grads;
    params.emplace("w", Tensor<double>::constant(1, 1, 1, 2, 8.0));
    grads.emplace("w", Tensor<double>(1, 1, 1, 2));  // zero gradient
    for (int s = 0; s < 3; ++s)
        opt.step(params, grads);
    const double factor = std::pow(1.0 - 0.1 * 0.5, 3);
    CHECK(params.at("w").v[0] == doctest::Approx(8.0 * factor).epsilon(1e-12));
}

TEST_CASE("constant gradient drives steps toward lr times sign") {
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(cfg);
    std::map<std::string, Tensor<double>> params, grads;
    params.emplace("w", Tensor<double>::constant(1, 1, 1, 1, 0.0));
    grads.emplace("w", Tensor<double>::constant(1, 1, 1, 1, -0.37));
    double prev = 0.0;
    double last_step = 0.0;
    for (int s = 0; s < 300; ++s) {
        opt.step(params, grads);
        last_step = params.at("w").v[0] - prev;
        prev = params.at("w").v[0];
    }
    // Gradient is negative, so the parameter climbs by ~lr per step.
    CHECK(last_step == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("identical seeds give identical trajectories") {
    auto run = [] {
        AdamWConfig cfg;
        cfg.lr = 0.005;
        AdamW<float> opt(cfg);
        std::map<std::string, Tensor<float>> params, grads;
        params.emplace("a", random_tensor<float>(1, 2, 3, 3, 60));
        params.emplace("b", random_tensor<float>(1, 1, 1, 4, 61));
        std::mt19937 rng(62);
        std::uniform_real_distribution<float> u(-1, 1);
        for (int s = 0; s < 25; ++s) {
            grads.clear();
            for (auto& [k, p] : params) {
                Tensor<float> g(p.n, p.c, p.h, p.w);
                for (std::int64_t i = 0; i < g.size(); ++i)
                    g.v[i] = u(rng);
                grads.emplace(k, std::move(g));
            }
            opt.step(params, grads);
        }
        return params;
    };
    auto p1 = run();
    auto p2 = run();
    CHECK((p1.at("a").v == p2.at("a").v).all());
    CHECK((p1.at("b").v == p2.at("b").v).all());
}

TEST_CASE("optimizer rejects unknown or misshapen gradients") {
    AdamW<float> opt;
    std::map<std::string, Tensor<float>> params, grads;
    params.emplace("w", Tensor<float>(1, 1, 2, 2));
    grads.emplace("ghost", Tensor<float>(1, 1, 2, 2));
    CHECK_THROWS_AS(opt.step(params, grads), Error);
    grads.clear();
    grads.emplace("w", Tensor<float>(1, 1, 2, 3));
    CHECK_THROWS_AS(opt.step(params, grads), Error);
}

// --- shape algebra -----------------------------------------------------------

TEST_CASE("spatial size bookkeeping across primitives") {
    auto x = random_tensor<float>(1, 3, 8, 8, 63);
    auto w3 = random_tensor<float>(5, 3, 3, 3, 64);
    auto w1 = random_tensor<float>(2, 3, 1, 1, 65);
    VecX<float> b5 = VecX<float>::Zero(5), b2 = VecX<float>::Zero(2);
    CHECK(conv3x3(x, w3, b5).h == 8);
    CHECK(conv1x1(x, w1, b2).w == 8);
    PoolIndices idx;
    auto p = maxpool2x2(x, idx);
    CHECK(p.h == 4);
    CHECK(unpool2x2(p, idx).h == 8);
    auto wt = random_tensor<float>(3, 4, 2, 2, 66);
    CHECK(transposed_conv2x2(x, wt).h == 16);
}
