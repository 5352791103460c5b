#include "orthoseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace orthoseg {

BandSelection::BandSelection(std::vector<BandId> b) : bands(std::move(b)) {
    if (bands.empty())
        throw Error("band selection is empty");
    std::set<BandId> seen;
    for (BandId id : bands)
        if (!seen.insert(id).second)
            throw Error("band selection repeats " + to_string(id));
}

void AugmentationConfig::validate() const {
    if (rotation_max_deg < 0.0 || rotation_max_deg > 180.0)
        throw Error("rotation_max_deg must be in [0, 180]");
    if (brightness < 0 || contrast < 0 || saturation < 0 || hue < 0)
        throw Error("jitter ranges must be non-negative");
}

Tile standardize(const Tile& tile) {
    const int s = tile.size();
    if (!tile.valid.any())
        throw Error("standardize: tile has no valid pixels");
    Tile out = tile;
    const double n = static_cast<double>(tile.valid.count());
    for (Grid& plane : out.data) {
        double sum = 0.0, sq = 0.0;
        for (int r = 0; r < s; ++r)
            for (int c = 0; c < s; ++c)
                if (tile.valid(r, c)) {
                    const double v = plane(r, c);
                    sum += v;
                    sq += v * v;
                }
        const double mean = sum / n;
        const double var = std::max(0.0, sq / n - mean * mean);
        if (var == 0.0) {
            plane.setZero();
            continue;
        }
        const double inv_sd = 1.0 / std::sqrt(var);
        for (int r = 0; r < s; ++r)
            for (int c = 0; c < s; ++c)
                plane(r, c) = tile.valid(r, c)
                                  ? static_cast<float>((plane(r, c) - mean) * inv_sd)
                                  : 0.0f;
    }
    return out;
}

Tile select_bands(const Tile& tile, const BandSelection& sel) {
    Tile out;
    out.index = tile.index;
    out.valid = tile.valid;
    for (BandId id : sel.bands) {
        auto it = std::find(tile.bands.begin(), tile.bands.end(), id);
        if (it == tile.bands.end())
            throw Error("selected band " + to_string(id) + " not present in tile");
        out.bands.push_back(id);
        out.data.push_back(tile.data[static_cast<size_t>(it - tile.bands.begin())]);
    }
    return out;
}

namespace {

// Inverse-mapped nearest-neighbour rotation about the tile center. Zero fill
// outside the source; validity rotates along with the data.
void rotate_in_place(Tile& t, double deg) {
    const int s = t.size();
    const double rad = deg * M_PI / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double ctr = (s - 1) / 2.0;
    std::vector<Grid> nd(t.data.size(), Grid::Zero(s, s));
    BoolGrid nv = BoolGrid::Constant(s, s, false);
    for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) {
            const double dr = r - ctr, dc = c - ctr;
            const long sr = std::lround(ctr + cs * dr + sn * dc);
            const long sc = std::lround(ctr - sn * dr + cs * dc);
            if (sr < 0 || sr >= s || sc < 0 || sc >= s)
                continue;
            nv(r, c) = t.valid(static_cast<int>(sr), static_cast<int>(sc));
            if (nv(r, c))
                for (size_t b = 0; b < t.data.size(); ++b)
                    nd[b](r, c) = t.data[b](static_cast<int>(sr), static_cast<int>(sc));
        }
    t.data = std::move(nd);
    t.valid = std::move(nv);
}

void flip_tile(Tile& t) {
    for (Grid& p : t.data)
        p = p.rowwise().reverse().eval();
    t.valid = t.valid.rowwise().reverse().eval();
}

struct Hsv {
    double h, s, v;  // h in [0,1)
};

Hsv rgb_to_hsv(double r, double g, double b) {
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double d = mx - mn;
    Hsv out{0.0, mx > 0 ? d / mx : 0.0, mx};
    if (d > 0) {
        if (mx == r)
            out.h = std::fmod((g - b) / d, 6.0) / 6.0;
        else if (mx == g)
            out.h = ((b - r) / d + 2.0) / 6.0;
        else
            out.h = ((r - g) / d + 4.0) / 6.0;
        if (out.h < 0)
            out.h += 1.0;
    }
    return out;
}

void hsv_to_rgb(const Hsv& in, double& r, double& g, double& b) {
    const double h6 = in.h * 6.0;
    const int i = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const double p = in.v * (1.0 - in.s);
    const double q = in.v * (1.0 - in.s * f);
    const double t = in.v * (1.0 - in.s * (1.0 - f));
    switch (i) {
        case 0: r = in.v; g = t; b = p; break;
        case 1: r = q; g = in.v; b = p; break;
        case 2: r = p; g = in.v; b = t; break;
        case 3: r = p; g = q; b = in.v; break;
        case 4: r = t; g = p; b = in.v; break;
        default: r = in.v; g = p; b = q; break;
    }
}

}  // namespace

Tile rotate_tile(const Tile& tile, double degrees) {
    Tile out = tile;
    if (degrees != 0.0)
        rotate_in_place(out, degrees);
    return out;
}

std::pair<Tile, Tile> augment(const Tile& image_tile, const Tile& mask_tile,
                              const AugmentationConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    if (image_tile.size() != mask_tile.size())
        throw Error("augment: image and mask tiles differ in size");
    Tile img = image_tile;
    Tile msk = mask_tile;

    // Fixed draw order: angle, flip coin, brightness, contrast, saturation,
    // hue. Disabled features consume no draws.
    if (cfg.rotation_max_deg > 0) {
        const double deg =
            std::uniform_real_distribution<double>(0.0, cfg.rotation_max_deg)(rng);
        if (deg != 0.0) {
            rotate_in_place(img, deg);
            rotate_in_place(msk, deg);
        }
    }
    if (cfg.flip_horizontal && std::uniform_int_distribution<int>(0, 1)(rng)) {
        flip_tile(img);
        flip_tile(msk);
    }

    const int s = img.size();
    auto valid_minmax = [&](size_t nchan, double& lo, double& hi) {
        lo = std::numeric_limits<double>::infinity();
        hi = -lo;
        for (size_t b = 0; b < nchan; ++b)
            for (int r = 0; r < s; ++r)
                for (int c = 0; c < s; ++c)
                    if (img.valid(r, c)) {
                        lo = std::min(lo, static_cast<double>(img.data[b](r, c)));
                        hi = std::max(hi, static_cast<double>(img.data[b](r, c)));
                    }
    };

    const bool any_valid = img.valid.any();
    if (cfg.brightness > 0 && any_valid) {
        const double d =
            std::uniform_real_distribution<double>(-cfg.brightness, cfg.brightness)(rng);
        double lo, hi;
        valid_minmax(img.data.size(), lo, hi);
        const float shift = static_cast<float>(d * (hi - lo));
        if (shift != 0.0f)
            for (Grid& p : img.data)
                for (int r = 0; r < s; ++r)
                    for (int c = 0; c < s; ++c)
                        if (img.valid(r, c))
                            p(r, c) += shift;
    }
    if (cfg.contrast > 0 && any_valid) {
        const double d =
            std::uniform_real_distribution<double>(-cfg.contrast, cfg.contrast)(rng);
        const double n = static_cast<double>(img.valid.count());
        for (Grid& p : img.data) {
            double sum = 0.0;
            for (int r = 0; r < s; ++r)
                for (int c = 0; c < s; ++c)
                    if (img.valid(r, c))
                        sum += p(r, c);
            const double mean = sum / n;
            for (int r = 0; r < s; ++r)
                for (int c = 0; c < s; ++c)
                    if (img.valid(r, c))
                        p(r, c) = static_cast<float>(mean + (p(r, c) - mean) * (1.0 + d));
        }
    }
    const bool color = img.channels() >= 3;
    if ((cfg.saturation > 0 || cfg.hue > 0) && color && any_valid) {
        const double ds =
            cfg.saturation > 0
                ? std::uniform_real_distribution<double>(-cfg.saturation, cfg.saturation)(rng)
                : 0.0;
        const double dh =
            cfg.hue > 0 ? std::uniform_real_distribution<double>(-cfg.hue, cfg.hue)(rng)
                        : 0.0;
        double lo, hi;
        valid_minmax(3, lo, hi);
        if (hi > lo) {
            const double span = hi - lo;
            for (int r = 0; r < s; ++r)
                for (int c = 0; c < s; ++c) {
                    if (!img.valid(r, c))
                        continue;
                    double rr = (img.data[0](r, c) - lo) / span;
                    double gg = (img.data[1](r, c) - lo) / span;
                    double bb = (img.data[2](r, c) - lo) / span;
                    Hsv hsv = rgb_to_hsv(rr, gg, bb);
                    hsv.s = std::clamp(hsv.s * (1.0 + ds), 0.0, 1.0);
                    hsv.h = hsv.h + dh;
                    hsv.h -= std::floor(hsv.h);
                    hsv_to_rgb(hsv, rr, gg, bb);
                    img.data[0](r, c) = static_cast<float>(lo + rr * span);
                    img.data[1](r, c) = static_cast<float>(lo + gg * span);
                    img.data[2](r, c) = static_cast<float>(lo + bb * span);
                }
        }
    }
    return {std::move(img), std::move(msk)};
}

}  // namespace orthoseg
