#include "orthoseg/synth.hpp"

#include "orthoseg/tensor.hpp"

#include <cmath>
#include <random>
#include <set>

namespace orthoseg {

namespace {

// Weeds render at soil + factor * (vine - soil): close enough to vines to
// fool a global threshold, distinct enough that shape cues can resolve them.
constexpr double kWeedIntensityFactor = 0.85;

double lattice_dist(double x, double period) {
    return std::abs(x - period * std::round(x / period));
}

// cos/sin with right-angle values snapped exact, so 0/90/180/270 degree
// fields relate by exact transposition/reflection.
std::pair<double, double> unit_direction(double degrees) {
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    double c = std::cos(rad), s = std::sin(rad);
    if (std::abs(c) < 1e-12) c = 0.0;
    if (std::abs(s) < 1e-12) s = 0.0;
    return {c, s};
}

}  // namespace

void SyntheticFieldSpec::validate() const {
    if (width < 1 || height < 1) throw Error("field dimensions must be positive");
    if (row_spacing <= 0 || plant_spacing <= 0 || canopy_width <= 0)
        throw Error("row geometry must be positive");
    if (row_spacing <= canopy_width)
        throw Error("row_spacing must exceed canopy_width");
    if (weed_density < 0.0 || weed_density > 1.0)
        throw Error("weed_density must be in [0,1]");
    if (bands.empty()) throw Error("field needs at least one band profile");
    std::set<BandId> seen;
    for (const auto& p : bands) {
        if (p.band == BandId::MASK)
            throw Error("MASK is reserved for the ground truth");
        if (!seen.insert(p.band).second)
            throw Error("duplicate band profile for " + to_string(p.band));
        if (p.vine_mean < 0.0 || p.vine_mean > 1.0 || p.soil_mean < 0.0 ||
            p.soil_mean > 1.0)
            throw Error("band means must lie in [0,1]");
        if (p.noise_std < 0.0) throw Error("noise_std must be non-negative");
    }
}

std::pair<RasterStack, RasterStack> generate_field(const SyntheticFieldSpec& spec) {
    spec.validate();
    const int H = spec.height, W = spec.width;
    const double ctr_r = (H - 1) / 2.0, ctr_c = (W - 1) / 2.0;
    const auto [cosd, sind] = unit_direction(spec.row_azimuth_deg);
    const double a = 0.4 * spec.plant_spacing;  // canopy semi-axis along the row
    const double b = spec.canopy_width / 2.0;   // semi-axis across the row

    // across-row coordinate of a pixel; rows live where v is near a multiple
    // of row_spacing
    auto across = [&](int i, int j) {
        return -(i - ctr_r) * sind + (j - ctr_c) * cosd;
    };
    auto along = [&](int i, int j) {
        return (i - ctr_r) * cosd + (j - ctr_c) * sind;
    };

    Grid mask = Grid::Zero(H, W);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            const double du = lattice_dist(along(i, j), spec.plant_spacing);
            const double dv = lattice_dist(across(i, j), spec.row_spacing);
            if ((du / a) * (du / a) + (dv / b) * (dv / b) <= 1.0) mask(i, j) = 1.0f;
        }

    std::mt19937_64 rng(spec.seed);
    BoolGrid weed = BoolGrid::Constant(H, W, false);
    if (spec.weed_density > 0.0) {
        const double r0 = b;
        const long target =
            std::lround(spec.weed_density * double(H) * W / (3.14159265 * r0 * r0));
        for (long k = 0; k < target; ++k) {
            for (int attempt = 0; attempt < 20; ++attempt) {
                const double cr = uniform_unit(rng()) * H;
                const double cc = uniform_unit(rng()) * W;
                const double rw = r0 * (0.6 + 0.8 * uniform_unit(rng()));
                // keep the whole blob clear of the vine canopy band
                const double vc = across(static_cast<int>(cr), static_cast<int>(cc));
                if (lattice_dist(vc, spec.row_spacing) <= b + rw + 1.0) continue;
                const int ilo = std::max(0, static_cast<int>(cr - rw) - 1);
                const int ihi = std::min(H - 1, static_cast<int>(cr + rw) + 1);
                const int jlo = std::max(0, static_cast<int>(cc - rw) - 1);
                const int jhi = std::min(W - 1, static_cast<int>(cc + rw) + 1);
                for (int i = ilo; i <= ihi; ++i)
                    for (int j = jlo; j <= jhi; ++j) {
                        const double d2 =
                            (i - cr) * (i - cr) + (j - cc) * (j - cc);
                        if (d2 <= rw * rw && mask(i, j) == 0.0f) weed(i, j) = true;
                    }
                break;
            }
        }
    }

    RasterStack image;
    for (const auto& p : spec.bands) {
        Grid g(H, W);
        const float vine = static_cast<float>(p.vine_mean);
        const float soil = static_cast<float>(p.soil_mean);
        const float weedv = static_cast<float>(
            p.soil_mean + kWeedIntensityFactor * (p.vine_mean - p.soil_mean));
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                g(i, j) = mask(i, j) > 0.5f ? vine : (weed(i, j) ? weedv : soil);
        if (p.noise_std > 0.0)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    g(i, j) += static_cast<float>(normal_draw(rng, 0.0, p.noise_std));
        image.bands.emplace_back(p.band, std::move(g));
    }

    RasterStack truth;
    truth.bands.emplace_back(BandId::MASK, std::move(mask));
    return {std::move(image), std::move(truth)};
}

}  // namespace orthoseg
