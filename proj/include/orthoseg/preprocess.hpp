#pragma once

#include "orthoseg/tiler.hpp"

#include <cstdint>
#include <random>

namespace orthoseg {

/// Ordered, duplicate-free subset of bands; defines the channel order fed to
/// the networks.
struct BandSelection {
    std::vector<BandId> bands;

    BandSelection() = default;
    explicit BandSelection(std::vector<BandId> b);
    int channels() const { return static_cast<int>(bands.size()); }
    std::string label() const { return band_list_string(bands); }
};

/// Training-time augmentation parameters. Jitter ranges are fractions of the
/// tile's value range; a range of 0 disables that jitter.
struct AugmentationConfig {
    double rotation_max_deg = 180.0;
    bool flip_horizontal = true;
    double brightness = 0.2;
    double contrast = 0.2;
    double saturation = 0.2;
    double hue = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-band standardization over the tile's valid pixels: x' = (x - mu) /
/// sigma with the population sigma. Zero-variance bands map to all zeros;
/// invalid pixels are set to 0.
Tile standardize(const Tile& tile);

/// Restricts/reorders the tile's channels to the selection.
Tile select_bands(const Tile& tile, const BandSelection& sel);

/// Rotates all planes and the validity grid about the tile center
/// (counter-clockwise degrees), nearest-neighbour with zero fill. 0 degrees
/// is a bit-exact identity; multiples of 90 permute the grid.
Tile rotate_tile(const Tile& tile, double degrees);

/// Applies one random draw of the configured augmentations. The geometric
/// part (rotation about the tile center with nearest-neighbour resampling
/// and zero fill, optional horizontal flip) hits image and mask identically;
/// color jitter touches the image only. Saturation/hue need >= 3 channels
/// and act on the first three.
std::pair<Tile, Tile> augment(const Tile& image_tile, const Tile& mask_tile,
                              const AugmentationConfig& cfg, std::mt19937_64& rng);

}  // namespace orthoseg
