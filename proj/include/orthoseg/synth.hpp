#pragma once

#include "orthoseg/raster.hpp"

#include <cstdint>
#include <utility>

namespace orthoseg {

/// Per-band rendering profile. Means are normalized reflectance in [0,1].
struct BandProfile {
    BandId band = BandId::NIR;
    double vine_mean = 0.8;
    double soil_mean = 0.2;
    double noise_std = 0.0;
};

/// Geometry and radiometry of a synthetic vineyard plot: parallel plant rows
/// at a fixed azimuth, elliptical canopies, optional inter-row weed blobs
/// that mimic vine intensity but keep mask label 0.
struct SyntheticFieldSpec {
    int width = 1200;
    int height = 1200;
    double row_azimuth_deg = 0.0;  // 0: rows run down the image; 90: across
    double row_spacing = 48.0;     // px between row centerlines
    double plant_spacing = 24.0;   // px between plant centers along a row
    double canopy_width = 12.0;    // px across-row canopy extent
    double weed_density = 0.0;     // target weed area fraction
    std::vector<BandProfile> bands{BandProfile{}};
    std::uint64_t seed = 0;

    void validate() const;
};

/// Renders (image, ground-truth mask). Deterministic for a fixed spec.
std::pair<RasterStack, RasterStack> generate_field(const SyntheticFieldSpec& spec);

}  // namespace orthoseg
