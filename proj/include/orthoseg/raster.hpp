#pragma once

#include "orthoseg/bands.hpp"
#include "orthoseg/common.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace orthoseg {

/// Multi-band georeferenced image grid. Bands keep their load order; after
/// ingestion through load_raster all bands share the same pixel dimensions.
struct RasterStack {
    std::vector<std::pair<BandId, Grid>> bands;
    /// Optional 6-coefficient affine pixel->world map in the order
    /// (origin_x, px_width, row_rot, origin_y, col_rot, px_height).
    std::optional<std::array<double, 6>> geo_transform;
    std::optional<float> nodata;

    int width() const { return bands.empty() ? 0 : static_cast<int>(bands.front().second.cols()); }
    int height() const { return bands.empty() ? 0 : static_cast<int>(bands.front().second.rows()); }

    bool has_band(BandId id) const;
    const Grid& band(BandId id) const;
    Grid& band(BandId id);
    std::vector<BandId> band_ids() const;

    /// True when every band grid has identical dimensions.
    bool uniform() const;
};

/// Nearest-neighbour resampling of a single grid (center-aligned mapping).
Grid nearest_resample(const Grid& src, int target_width, int target_height);

/// Returns the stack with the named band replaced by a nearest-neighbour
/// resampled grid of the requested size. Other bands are untouched.
RasterStack resample_to_grid(const RasterStack& stack, BandId band, int target_width,
                             int target_height);

/// Resamples every band onto the finest (largest) grid present in the stack.
RasterStack harmonize_to_finest(const RasterStack& stack);

/// Loads a raster from a GeoTIFF (.tif/.tiff) or raw sidecar (.hdr/.raw)
/// file. When expected_bands is non-empty the result holds exactly those
/// bands in that order; a count or identity mismatch is an error. Bands with
/// differing resolutions are harmonized onto the finest grid.
RasterStack load_raster(const std::filesystem::path& path,
                        const std::vector<BandId>& expected_bands = {});

/// Writes a raster in the format selected by the file extension. Values are
/// stored as 32-bit floats; a paired load_raster reproduces them bit-exact.
void save_raster(const RasterStack& stack, const std::filesystem::path& path);

/// Maps a mask band to strict {0,1}: pixels equal to 1 stay 1, everything
/// else (background, nodata) becomes 0.
Grid mask_to_binary(const Grid& mask, std::optional<float> nodata);

// Format back-ends (used by load_raster/save_raster; exposed for tests).
RasterStack load_sidecar(const std::filesystem::path& hdr_path, bool* ids_from_file = nullptr);
void save_sidecar(const RasterStack& stack, const std::filesystem::path& hdr_path);
/// ids_from_file reports whether band identities were recorded in the file;
/// anonymous TIFFs get placeholder identities that load_raster overrides.
RasterStack load_geotiff(const std::filesystem::path& path, bool* ids_from_file = nullptr);
void save_geotiff(const RasterStack& stack, const std::filesystem::path& path);

/// 8-bit grayscale preview (binary PGM); masks render 0/255.
void save_pgm_preview(const Grid& grid, const std::filesystem::path& path);

}  // namespace orthoseg
