#pragma once

#include "orthoseg/tensor.hpp"

#include <map>
#include <string>

namespace orthoseg {

struct AdamWConfig {
    double lr = 0.000171;
    double weight_decay = 0.00061;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment optimizer with decoupled weight decay. The decay
/// multiplies the parameter directly (theta *= 1 - lr*lambda) before the
/// moment-based step, so it never enters the gradient statistics.
template <class S>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {
        if (cfg_.lr <= 0) throw Error("learning rate must be positive");
    }

    const AdamWConfig& config() const { return cfg_; }
    std::int64_t steps() const { return t_; }

    /// One update for every entry of `grads`; parameters without a gradient
    /// (e.g. running statistics) are left untouched. Iteration follows the
    /// map's name order, so trajectories are reproducible.
    void step(std::map<std::string, Tensor<S>>& params,
              const std::map<std::string, Tensor<S>>& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (const auto& [name, g] : grads) {
            auto it = params.find(name);
            if (it == params.end())
                throw Error("gradient for unknown parameter '" + name + "'");
            Tensor<S>& p = it->second;
            if (!p.same_shape(g))
                throw Error("gradient shape mismatch for '" + name + "'");
            Moments& mo = state_[name];
            if (mo.m.size() == 0) {
                mo.m = Eigen::ArrayXd::Zero(p.size());
                mo.v = Eigen::ArrayXd::Zero(p.size());
            }
            for (std::int64_t i = 0; i < p.size(); ++i) {
                const double gi = static_cast<double>(g.v[i]);
                double th = static_cast<double>(p.v[i]);
                th *= 1.0 - cfg_.lr * cfg_.weight_decay;
                mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * gi;
                mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * gi * gi;
                const double mhat = mo.m[i] / bc1;
                const double vhat = mo.v[i] / bc2;
                p.v[i] = static_cast<S>(th - cfg_.lr * mhat /
                                                 (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

private:
    struct Moments {
        Eigen::ArrayXd m, v;
    };
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace orthoseg
