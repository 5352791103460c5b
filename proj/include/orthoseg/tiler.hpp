#pragma once

#include "orthoseg/raster.hpp"

#include <utility>
#include <vector>

namespace orthoseg {

/// Parent-raster origin of a tile, in pixels. Origins are non-negative
/// multiples of the tile size.
struct TileIndex {
    int row_origin = 0;
    int col_origin = 0;
};

/// Fixed-size sub-image cut from a raster. Pixels outside the parent are
/// zero-filled and flagged invalid.
struct Tile {
    TileIndex index;
    std::vector<BandId> bands;
    std::vector<Grid> data;  // one (S x S) plane per band, aligned with bands
    BoolGrid valid;          // (S x S)

    int size() const { return static_cast<int>(valid.rows()); }
    int channels() const { return static_cast<int>(data.size()); }
    bool fully_valid() const { return valid.all(); }
    const Grid& plane(BandId id) const;
};

/// Non-overlapping tiling of a raster, row-major from the top-left.
struct TileGrid {
    int parent_width = 0;
    int parent_height = 0;
    int tile_size = 0;
    std::vector<Tile> tiles;

    int tile_rows() const { return (parent_height + tile_size - 1) / tile_size; }
    int tile_cols() const { return (parent_width + tile_size - 1) / tile_size; }
};

/// Cuts the raster into ceil(h/S) x ceil(w/S) tiles starting at the top-left
/// corner, marching right then down. Boundary tiles are zero-padded.
TileGrid split(const RasterStack& raster, int tile_size);

/// Reassembles a full-size single-band MASK raster from per-tile sub-masks.
/// sub_masks must align with grid.tiles; padded regions are dropped.
RasterStack rebuild(const TileGrid& grid, const std::vector<Grid>& sub_masks);

/// Keeps the (image, mask) tile pairs whose mask has at least one positive
/// valid pixel. Order is preserved.
std::vector<std::pair<Tile, Tile>> filter_training_tiles(const TileGrid& image_tiles,
                                                         const TileGrid& mask_tiles);

}  // namespace orthoseg
