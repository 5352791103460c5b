#pragma once

// Central finite-difference comparison used by the gradient tests: perturb
// every scalar in `buf`, re-evaluate the projected loss, and report the worst
// relative error against the analytic gradient.

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

template <class S, class Fn>
double max_rel_err_vs_fd(Eigen::Array<S, Eigen::Dynamic, 1>& buf,
                         const Eigen::Array<S, Eigen::Dynamic, 1>& analytic,
                         Fn&& scalar_loss, double eps) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < buf.size(); ++i) {
        const S keep = buf[i];
        buf[i] = keep + static_cast<S>(eps);
        const double lp = scalar_loss();
        buf[i] = keep - static_cast<S>(eps);
        const double lm = scalar_loss();
        buf[i] = keep;
        const double fd = (lp - lm) / (2.0 * eps);
        const double an = static_cast<double>(analytic[i]);
        const double err =
            std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
        worst = std::max(worst, err);
    }
    return worst;
}
