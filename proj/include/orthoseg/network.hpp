#pragma once

#include "orthoseg/ops.hpp"
#include "orthoseg/tiler.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace orthoseg {

enum class Arch { unet, segnet, modsegnet };

inline std::string to_string(Arch a) {
    switch (a) {
        case Arch::unet: return "unet";
        case Arch::segnet: return "segnet";
        case Arch::modsegnet: return "modsegnet";
    }
    throw Error("invalid Arch");
}

inline Arch arch_from_string(const std::string& s) {
    if (s == "unet") return Arch::unet;
    if (s == "segnet") return Arch::segnet;
    if (s == "modsegnet") return Arch::modsegnet;
    throw Error("unknown architecture '" + s + "'");
}

enum class WeightInit { mean_one, fan_in };

inline std::string to_string(WeightInit w) {
    return w == WeightInit::mean_one ? "mean_one" : "fan_in";
}

inline WeightInit weight_init_from_string(const std::string& s) {
    if (s == "mean_one") return WeightInit::mean_one;
    if (s == "fan_in") return WeightInit::fan_in;
    throw Error("unknown weight init '" + s + "'");
}

/// Shape of one encoder–decoder network. Channel widths double per encoder
/// stage starting at base_width; the decoder mirrors them back down.
struct NetworkConfig {
    Arch arch = Arch::unet;
    int in_channels = 1;
    int depth = 4;
    int base_width = 16;
    double dropout_p = 0.2;
    int out_channels = 1;
    WeightInit init = WeightInit::mean_one;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    void validate(int tile_size) const {
        if (in_channels < 1 || out_channels < 1 || base_width < 1)
            throw Error("network channel counts must be positive");
        if (depth < 1) throw Error("network depth must be >= 1");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw Error("dropout_p must be in [0,1)");
        if (tile_size % (1 << depth) != 0)
            throw Error("tile size " + std::to_string(tile_size) +
                        " is not divisible by 2^depth = " + std::to_string(1 << depth));
    }

    nlohmann::json to_json() const {
        return {{"arch", to_string(arch)},       {"in_channels", in_channels},
                {"depth", depth},                {"base_width", base_width},
                {"dropout_p", dropout_p},        {"out_channels", out_channels},
                {"init", to_string(init)},       {"bn_eps", bn_eps},
                {"bn_momentum", bn_momentum}};
    }

    static NetworkConfig from_json(const nlohmann::json& j) {
        NetworkConfig c;
        c.arch = arch_from_string(j.at("arch").get<std::string>());
        c.in_channels = j.at("in_channels").get<int>();
        c.depth = j.at("depth").get<int>();
        c.base_width = j.at("base_width").get<int>();
        c.dropout_p = j.at("dropout_p").get<double>();
        c.out_channels = j.at("out_channels").get<int>();
        c.init = weight_init_from_string(j.value("init", "mean_one"));
        c.bn_eps = j.value("bn_eps", 1e-5);
        c.bn_momentum = j.value("bn_momentum", 0.1);
        return c;
    }
};

/// Named parameter store. Entries whose name contains ".running_" are batch
/// statistics, not trainable weights.
template <class S>
using Parameters = std::map<std::string, Tensor<S>>;

inline bool is_learnable(const std::string& name) {
    return name.find(".running_") == std::string::npos;
}

inline int stage_width(const NetworkConfig& cfg, int stage) {
    return cfg.base_width << (stage - 1);
}

/// Channels entering the decoder conv at stage j: the upsampled features,
/// plus the encoder skip for the architectures that concatenate one.
inline int decoder_in_channels(const NetworkConfig& cfg, int stage) {
    const int w = stage_width(cfg, stage);
    return cfg.arch == Arch::segnet ? w : 2 * w;
}

inline int decoder_out_channels(const NetworkConfig& cfg, int stage) {
    return stage > 1 ? stage_width(cfg, stage - 1) : cfg.base_width;
}

/// Number of trainable scalars (running statistics excluded).
inline std::int64_t parameter_count(const NetworkConfig& cfg) {
    std::int64_t total = 0;
    for (int i = 1; i <= cfg.depth; ++i) {
        const int w = stage_width(cfg, i);
        const int cin = i == 1 ? cfg.in_channels : stage_width(cfg, i - 1);
        total += std::int64_t(w) * cin * 9 + w;  // conv
        total += 2 * w;                          // bn gamma/beta
    }
    for (int j = 1; j <= cfg.depth; ++j) {
        const int w = stage_width(cfg, j);
        const int out = decoder_out_channels(cfg, j);
        if (cfg.arch == Arch::unet) total += std::int64_t(w) * w * 4;  // up-conv
        total += std::int64_t(out) * decoder_in_channels(cfg, j) * 9 + out;
        total += 2 * out;
    }
    total += std::int64_t(cfg.out_channels) * cfg.base_width + cfg.out_channels;
    return total;
}

namespace detail {

template <class S>
void fill_weights(Tensor<S>& t, WeightInit init, int fan_in, std::mt19937_64& rng) {
    if (init == WeightInit::mean_one) {
        for (std::int64_t i = 0; i < t.size(); ++i)
            t.v[i] = static_cast<S>(normal_draw(rng, 1.0, 0.2));
    } else {
        const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < t.size(); ++i)
            t.v[i] = static_cast<S>(normal_draw(rng, 0.0, sd));
    }
}

template <class S>
void fill_vector(Tensor<S>& t, WeightInit init, double standard_value,
                 std::mt19937_64& rng) {
    if (init == WeightInit::mean_one) {
        for (std::int64_t i = 0; i < t.size(); ++i)
            t.v[i] = static_cast<S>(normal_draw(rng, 1.0, 0.2));
    } else {
        t.v.setConstant(static_cast<S>(standard_value));
    }
}

template <class S>
void add_conv_block(Parameters<S>& p, const std::string& prefix, int out_ch, int in_ch,
                    const NetworkConfig& cfg, std::mt19937_64& rng) {
    Tensor<S> w(out_ch, in_ch, 3, 3);
    fill_weights(w, cfg.init, in_ch * 9, rng);
    p.emplace(prefix + ".conv.weight", std::move(w));
    Tensor<S> b(out_ch, 1, 1, 1);
    fill_vector(b, cfg.init, 0.0, rng);
    p.emplace(prefix + ".conv.bias", std::move(b));
    Tensor<S> gamma(out_ch, 1, 1, 1);
    fill_vector(gamma, cfg.init, 1.0, rng);
    p.emplace(prefix + ".bn.gamma", std::move(gamma));
    Tensor<S> beta(out_ch, 1, 1, 1);
    fill_vector(beta, cfg.init, 0.0, rng);
    p.emplace(prefix + ".bn.beta", std::move(beta));
    p.emplace(prefix + ".bn.running_mean", Tensor<S>(out_ch, 1, 1, 1));
    p.emplace(prefix + ".bn.running_var",
              Tensor<S>::constant(out_ch, 1, 1, 1, S(1)));
}

}  // namespace detail

/// Creates all parameters for the configured architecture, drawing from a
/// single seeded stream in a fixed layer order (deterministic).
template <class S>
Parameters<S> build(const NetworkConfig& cfg, std::uint64_t seed) {
    Parameters<S> p;
    std::mt19937_64 rng(seed);
    for (int i = 1; i <= cfg.depth; ++i) {
        const int w = stage_width(cfg, i);
        const int cin = i == 1 ? cfg.in_channels : stage_width(cfg, i - 1);
        detail::add_conv_block(p, "enc" + std::to_string(i), w, cin, cfg, rng);
    }
    for (int j = cfg.depth; j >= 1; --j) {
        const std::string prefix = "dec" + std::to_string(j);
        if (cfg.arch == Arch::unet) {
            const int w = stage_width(cfg, j);
            Tensor<S> up(w, w, 2, 2);
            detail::fill_weights(up, cfg.init, w * 4, rng);
            p.emplace(prefix + ".up.weight", std::move(up));
        }
        detail::add_conv_block(p, prefix, decoder_out_channels(cfg, j),
                               decoder_in_channels(cfg, j), cfg, rng);
    }
    Tensor<S> fw(cfg.out_channels, cfg.base_width, 1, 1);
    detail::fill_weights(fw, cfg.init, cfg.base_width, rng);
    p.emplace("final.weight", std::move(fw));
    Tensor<S> fb(cfg.out_channels, 1, 1, 1);
    detail::fill_vector(fb, cfg.init, 0.0, rng);
    p.emplace("final.bias", std::move(fb));
    return p;
}

/// Encoder products the decoder consumes: deepest pooled features, one skip
/// tensor per stage (pre-pool activations), and the pooling argmax indices.
template <class S>
struct EncoderOut {
    Tensor<S> bottom;
    std::vector<Tensor<S>> skips;
    std::vector<PoolIndices> indices;
};

/// Saved intermediates for one conv block, enough to run its backward pass.
template <class S>
struct StageTrace {
    Tensor<S> x_in;       // conv input
    Tensor<S> pre_act;    // batchnorm output (relu input)
    Tensor<S> drop_mask;  // dropout multiplier
    BnContext<S> bn;
};

template <class S>
struct ForwardTrace {
    std::vector<StageTrace<S>> enc;  // stage i at [i-1]
    std::vector<StageTrace<S>> dec;  // stage j at [j-1]
    std::vector<Tensor<S>> up_in;    // decoder upsample inputs, stage j at [j-1]
    Tensor<S> final_in;              // conv1x1 input
};

namespace detail {

/// conv3x3 -> batchnorm -> relu -> dropout. Mutates running stats in train
/// mode; captures intermediates when tr is given.
template <class S>
Tensor<S> conv_block(Parameters<S>& p, const std::string& prefix, const Tensor<S>& x,
                     const NetworkConfig& cfg, Mode mode, std::mt19937_64& rng,
                     StageTrace<S>* tr) {
    const Tensor<S>& w = p.at(prefix + ".conv.weight");
    Tensor<S> t = conv3x3(x, w, p.at(prefix + ".conv.bias").v);
    t = batchnorm(t, p.at(prefix + ".bn.gamma").v, p.at(prefix + ".bn.beta").v, mode,
                  p.at(prefix + ".bn.running_mean").v, p.at(prefix + ".bn.running_var").v,
                  cfg.bn_eps, cfg.bn_momentum, tr ? &tr->bn : nullptr);
    if (tr) {
        tr->x_in = x;
        tr->pre_act = t;
    }
    t = relu(t);
    t = dropout(t, cfg.dropout_p, mode, rng, tr ? &tr->drop_mask : nullptr);
    return t;
}

/// Backward through one conv block. d is the gradient at the block output;
/// returns the gradient at the block input. Accumulates parameter gradients.
template <class S>
Tensor<S> conv_block_backward(const Parameters<S>& p, Parameters<S>& g,
                              const std::string& prefix, const StageTrace<S>& tr,
                              Tensor<S> d) {
    d.v *= tr.drop_mask.v;                       // dropout
    d.v = (tr.pre_act.v > S(0)).select(d.v, S(0));  // relu
    d = batchnorm_backward(d, tr.bn, p.at(prefix + ".bn.gamma").v,
                           &g.at(prefix + ".bn.gamma").v, &g.at(prefix + ".bn.beta").v);
    Tensor<S> dx(tr.x_in.n, tr.x_in.c, tr.x_in.h, tr.x_in.w);
    conv3x3_backward(tr.x_in, p.at(prefix + ".conv.weight"), d, &dx,
                     &g.at(prefix + ".conv.weight"), &g.at(prefix + ".conv.bias").v);
    return dx;
}

}  // namespace detail

template <class S>
EncoderOut<S> encoder_forward(Parameters<S>& params, const NetworkConfig& cfg,
                              const Tensor<S>& x, Mode mode, std::mt19937_64& rng,
                              ForwardTrace<S>* trace = nullptr) {
    if (x.c != cfg.in_channels)
        throw Error("input has " + std::to_string(x.c) + " channels, network expects " +
                    std::to_string(cfg.in_channels));
    if (x.h % (1 << cfg.depth) != 0 || x.w % (1 << cfg.depth) != 0)
        throw Error("input spatial dims must be divisible by 2^depth");
    if (trace) trace->enc.resize(static_cast<std::size_t>(cfg.depth));

    EncoderOut<S> out;
    out.skips.reserve(static_cast<std::size_t>(cfg.depth));
    out.indices.resize(static_cast<std::size_t>(cfg.depth));
    Tensor<S> cur = x;
    for (int i = 1; i <= cfg.depth; ++i) {
        cur = detail::conv_block(params, "enc" + std::to_string(i), cur, cfg, mode, rng,
                                 trace ? &trace->enc[i - 1] : nullptr);
        out.skips.push_back(cur);
        cur = maxpool2x2(cur, out.indices[i - 1]);
    }
    out.bottom = std::move(cur);
    return out;
}

template <class S>
Tensor<S> decoder_forward(Parameters<S>& params, const NetworkConfig& cfg,
                          const EncoderOut<S>& eo, Mode mode, std::mt19937_64& rng,
                          ForwardTrace<S>* trace = nullptr) {
    if (trace) {
        trace->dec.resize(static_cast<std::size_t>(cfg.depth));
        trace->up_in.resize(static_cast<std::size_t>(cfg.depth));
    }
    Tensor<S> cur = eo.bottom;
    for (int j = cfg.depth; j >= 1; --j) {
        const std::string prefix = "dec" + std::to_string(j);
        if (trace) trace->up_in[j - 1] = cur;
        Tensor<S> up;
        if (cfg.arch == Arch::unet)
            up = transposed_conv2x2(cur, params.at(prefix + ".up.weight"));
        else
            up = unpool2x2(cur, eo.indices[j - 1]);
        Tensor<S> cat =
            cfg.arch == Arch::segnet ? std::move(up) : concat_channels(up, eo.skips[j - 1]);
        cur = detail::conv_block(params, prefix, cat, cfg, mode, rng,
                                 trace ? &trace->dec[j - 1] : nullptr);
    }
    if (trace) trace->final_in = cur;
    Tensor<S> logits = conv1x1(cur, params.at("final.weight"), params.at("final.bias").v);
    return logits;
}

template <class S>
Tensor<S> forward(Parameters<S>& params, const NetworkConfig& cfg, const Tensor<S>& x,
                  Mode mode, std::mt19937_64& rng, ForwardTrace<S>* trace = nullptr,
                  EncoderOut<S>* encoder_out = nullptr) {
    EncoderOut<S> eo = encoder_forward(params, cfg, x, mode, rng, trace);
    Tensor<S> logits = decoder_forward(params, cfg, eo, mode, rng, trace);
    if (encoder_out) *encoder_out = std::move(eo);
    return logits;
}

/// Reverse pass over a traced training forward. Returns gradients for every
/// learnable parameter (zero-filled for layers the gradient missed).
template <class S>
Parameters<S> backward(const Parameters<S>& params, const NetworkConfig& cfg,
                       const ForwardTrace<S>& trace, const EncoderOut<S>& eo,
                       const Tensor<S>& dlogits) {
    Parameters<S> grads;
    for (const auto& [name, t] : params)
        if (is_learnable(name))
            grads.emplace(name, Tensor<S>(t.n, t.c, t.h, t.w));

    Tensor<S> d(trace.final_in.n, trace.final_in.c, trace.final_in.h, trace.final_in.w);
    conv1x1_backward(trace.final_in, params.at("final.weight"), dlogits, &d,
                     &grads.at("final.weight"), &grads.at("final.bias").v);

    // Skip gradients surface while walking the decoder and are consumed by
    // the matching encoder stage afterwards.
    std::vector<Tensor<S>> dskip(static_cast<std::size_t>(cfg.depth));
    for (int j = 1; j <= cfg.depth; ++j) {
        const std::string prefix = "dec" + std::to_string(j);
        Tensor<S> dcat = detail::conv_block_backward(params, grads, prefix,
                                                     trace.dec[j - 1], std::move(d));
        Tensor<S> dup;
        if (cfg.arch == Arch::segnet) {
            dup = std::move(dcat);
        } else {
            const Tensor<S>& skip = eo.skips[j - 1];
            dup = Tensor<S>(dcat.n, dcat.c - skip.c, dcat.h, dcat.w);
            dskip[j - 1] = Tensor<S>(skip.n, skip.c, skip.h, skip.w);
            split_channels(dcat, dup, dskip[j - 1]);
        }
        if (cfg.arch == Arch::unet) {
            const Tensor<S>& up_in = trace.up_in[j - 1];
            Tensor<S> dprev(up_in.n, up_in.c, up_in.h, up_in.w);
            transposed_conv2x2_backward(up_in, params.at(prefix + ".up.weight"), dup,
                                        &dprev, &grads.at(prefix + ".up.weight"));
            d = std::move(dprev);
        } else {
            d = unpool2x2_backward(dup, eo.indices[j - 1]);
        }
    }

    for (int i = cfg.depth; i >= 1; --i) {
        Tensor<S> dact = maxpool2x2_backward(d, eo.indices[i - 1]);
        if (cfg.arch != Arch::segnet) dact.v += dskip[i - 1].v;
        d = detail::conv_block_backward(params, grads, "enc" + std::to_string(i),
                                        trace.enc[i - 1], std::move(dact));
    }
    return grads;
}

/// Inference on one standardized, band-selected tile: sigmoid(logit) >
/// threshold. Parameters are read-only (eval mode never mutates them).
inline Grid predict_mask(const Parameters<float>& params, const NetworkConfig& cfg,
                         const Tile& tile, double threshold = 0.5) {
    if (tile.channels() != cfg.in_channels)
        throw Error("tile has " + std::to_string(tile.channels()) +
                    " channels, network expects " + std::to_string(cfg.in_channels));
    const int s = tile.size();
    Tensor<float> x(1, tile.channels(), s, s);
    for (int ci = 0; ci < tile.channels(); ++ci)
        x.plane(0, ci) = tile.data[static_cast<std::size_t>(ci)];

    auto& mutable_params = const_cast<Parameters<float>&>(params);
    std::mt19937_64 rng(0);  // unused: dropout is inactive in eval mode
    Tensor<float> logits = forward(mutable_params, cfg, x, Mode::eval, rng);

    Grid mask(s, s);
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
            const double z = logits.at(0, 0, i, j);
            const double p = 1.0 / (1.0 + std::exp(-z));
            mask(i, j) = p > threshold ? 1.0f : 0.0f;
        }
    return mask;
}

}  // namespace orthoseg
