#include "orthoseg/tiler.hpp"

#include <algorithm>

namespace orthoseg {

const Grid& Tile::plane(BandId id) const {
    for (std::size_t i = 0; i < bands.size(); ++i)
        if (bands[i] == id) return data[i];
    throw Error("missing band " + to_string(id) + " in tile");
}

TileGrid split(const RasterStack& raster, int tile_size) {
    if (tile_size < 1) throw Error("zero tile size");
    if (raster.bands.empty() || raster.width() < 1 || raster.height() < 1)
        throw Error("cannot split an empty raster");
    if (!raster.uniform()) throw Error("cannot split raster with non-uniform band sizes");

    const int W = raster.width();
    const int H = raster.height();
    const int S = tile_size;

    TileGrid grid;
    grid.parent_width = W;
    grid.parent_height = H;
    grid.tile_size = S;
    grid.tiles.reserve(static_cast<std::size_t>(grid.tile_rows()) * grid.tile_cols());

    for (int r0 = 0; r0 < H; r0 += S) {
        for (int c0 = 0; c0 < W; c0 += S) {
            Tile tile;
            tile.index = {r0, c0};
            tile.bands = raster.band_ids();
            tile.valid = BoolGrid::Constant(S, S, false);
            const int h = std::min(S, H - r0);
            const int w = std::min(S, W - c0);
            tile.valid.block(0, 0, h, w).setConstant(true);
            tile.data.reserve(raster.bands.size());
            for (const auto& [id, g] : raster.bands) {
                Grid plane = Grid::Zero(S, S);
                plane.block(0, 0, h, w) = g.block(r0, c0, h, w);
                tile.data.push_back(std::move(plane));
            }
            grid.tiles.push_back(std::move(tile));
        }
    }
    return grid;
}

RasterStack rebuild(const TileGrid& grid, const std::vector<Grid>& sub_masks) {
    if (sub_masks.size() != grid.tiles.size())
        throw Error("length mismatch: " + std::to_string(sub_masks.size()) + " sub-masks for " +
                    std::to_string(grid.tiles.size()) + " tiles");
    const int S = grid.tile_size;
    Grid full = Grid::Zero(grid.parent_height, grid.parent_width);
    for (std::size_t i = 0; i < sub_masks.size(); ++i) {
        const Grid& m = sub_masks[i];
        if (m.rows() != S || m.cols() != S)
            throw Error("sub-mask dimension mismatch at tile " + std::to_string(i));
        const int r0 = grid.tiles[i].index.row_origin;
        const int c0 = grid.tiles[i].index.col_origin;
        const int h = std::min(S, grid.parent_height - r0);
        const int w = std::min(S, grid.parent_width - c0);
        full.block(r0, c0, h, w) = m.block(0, 0, h, w);
    }
    RasterStack out;
    out.bands.emplace_back(BandId::MASK, std::move(full));
    return out;
}

std::vector<std::pair<Tile, Tile>> filter_training_tiles(const TileGrid& image_tiles,
                                                         const TileGrid& mask_tiles) {
    if (image_tiles.tile_size != mask_tiles.tile_size ||
        image_tiles.parent_width != mask_tiles.parent_width ||
        image_tiles.parent_height != mask_tiles.parent_height ||
        image_tiles.tiles.size() != mask_tiles.tiles.size())
        throw Error("grid mismatch between image and mask tiles");

    std::vector<std::pair<Tile, Tile>> kept;
    for (std::size_t i = 0; i < image_tiles.tiles.size(); ++i) {
        const Tile& mask = mask_tiles.tiles[i];
        const Grid& m = mask.plane(BandId::MASK);
        bool positive = false;
        for (Eigen::Index k = 0; k < m.size() && !positive; ++k)
            positive = mask.valid.data()[k] && m.data()[k] == 1.0f;
        if (positive) kept.emplace_back(image_tiles.tiles[i], mask_tiles.tiles[i]);
    }
    return kept;
}

}  // namespace orthoseg
