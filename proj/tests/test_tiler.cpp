#include <doctest.h>

#include "orthoseg/tiler.hpp"

#include <random>

using namespace orthoseg;

namespace {

RasterStack mask_raster(const Grid& m) {
    RasterStack s;
    s.bands.emplace_back(BandId::MASK, m);
    return s;
}

Grid random_binary(int h, int w, std::mt19937& rng) {
    std::bernoulli_distribution coin(0.3);
    Grid g(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            g(r, c) = coin(rng) ? 1.0f : 0.0f;
    return g;
}

}  // namespace

TEST_CASE("exact tiling of 480x480 at 240") {
    RasterStack s = mask_raster(Grid::Zero(480, 480));
    TileGrid g = split(s, 240);
    REQUIRE(g.tiles.size() == 4);
    const int want[4][2] = {{0, 0}, {0, 240}, {240, 0}, {240, 240}};
    for (int i = 0; i < 4; ++i) {
        CHECK(g.tiles[i].index.row_origin == want[i][0]);
        CHECK(g.tiles[i].index.col_origin == want[i][1]);
        CHECK(g.tiles[i].fully_valid());
    }
}

TEST_CASE("500x500 at 240 pads the boundary tiles") {
    RasterStack s = mask_raster(Grid::Constant(500, 500, 1.0f));
    TileGrid g = split(s, 240);
    REQUIRE(g.tiles.size() == 9);
    CHECK(g.tile_rows() == 3);
    CHECK(g.tile_cols() == 3);

    // Row-major order: the last tile starts at (480, 480).
    const Tile& last = g.tiles[8];
    CHECK(last.index.row_origin == 480);
    CHECK(last.index.col_origin == 480);
    CHECK(last.valid.count() == 20 * 20);
    CHECK(last.valid.block(0, 0, 20, 20).all());
    // Padding holds the value 0.
    CHECK(last.data[0](0, 0) == 1.0f);
    CHECK(last.data[0](0, 20) == 0.0f);
    CHECK(last.data[0](20, 0) == 0.0f);

    // Middle-edge tile: 240 wide in one axis, 20 in the other.
    const Tile& right_mid = g.tiles[5];
    CHECK(right_mid.index.row_origin == 240);
    CHECK(right_mid.index.col_origin == 480);
    CHECK(right_mid.valid.count() == 240 * 20);
}

TEST_CASE("single-tile identity") {
    Grid m(240, 240);
    for (int r = 0; r < 240; ++r)
        for (int c = 0; c < 240; ++c)
            m(r, c) = static_cast<float>((r * 7 + c) % 2);
    TileGrid g = split(mask_raster(m), 240);
    REQUIRE(g.tiles.size() == 1);
    CHECK(g.tiles[0].fully_valid());
    CHECK((g.tiles[0].data[0] == m).all());
}

TEST_CASE("rebuild with all-ones sub-masks drops the padding") {
    RasterStack s = mask_raster(Grid::Zero(500, 500));
    TileGrid g = split(s, 240);
    std::vector<Grid> ones(9, Grid::Constant(240, 240, 1.0f));
    RasterStack out = rebuild(g, ones);
    CHECK(out.width() == 500);
    CHECK(out.height() == 500);
    CHECK((out.band(BandId::MASK) == 1.0f).all());
}

TEST_CASE("rebuild rejects wrong counts and shapes") {
    TileGrid g = split(mask_raster(Grid::Zero(480, 480)), 240);
    std::vector<Grid> three(3, Grid::Zero(240, 240));
    CHECK_THROWS_AS(rebuild(g, three), Error);
    std::vector<Grid> bad(4, Grid::Zero(239, 240));
    CHECK_THROWS_AS(rebuild(g, bad), Error);
}

TEST_CASE("rebuild after split is the identity on masks") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> dim(1, 97), ts(1, 40);
    for (int trial = 0; trial < 200; ++trial) {
        const int h = dim(rng), w = dim(rng), S = ts(rng);
        Grid m = random_binary(h, w, rng);
        TileGrid g = split(mask_raster(m), S);
        std::vector<Grid> subs;
        subs.reserve(g.tiles.size());
        for (const Tile& t : g.tiles)
            subs.push_back(t.data[0]);
        RasterStack out = rebuild(g, subs);
        REQUIRE(out.width() == w);
        REQUIRE(out.height() == h);
        CHECK((out.band(BandId::MASK) == m).all());
    }
}

TEST_CASE("tiles partition the parent exactly once") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> dim(1, 130), ts(1, 64);
    for (int trial = 0; trial < 50; ++trial) {
        const int h = dim(rng), w = dim(rng), S = ts(rng);
        TileGrid g = split(mask_raster(Grid::Zero(h, w)), S);
        Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic> cover =
            Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic>::Zero(h, w);
        for (const Tile& t : g.tiles)
            for (int r = 0; r < S; ++r)
                for (int c = 0; c < S; ++c)
                    if (t.valid(r, c))
                        cover(t.index.row_origin + r, t.index.col_origin + c) += 1;
        CHECK((cover == 1).all());
    }
}

TEST_CASE("split errors") {
    CHECK_THROWS_AS(split(mask_raster(Grid::Zero(4, 4)), 0), Error);
    CHECK_THROWS_AS(split(RasterStack{}, 8), Error);
}

TEST_CASE("training filter keeps only tiles with a positive pixel") {
    Grid img = Grid::Constant(8, 4, 2.0f);
    Grid m = Grid::Zero(8, 4);
    m(5, 1) = 1.0f;  // only the bottom tile has a vine pixel
    RasterStack imgs;
    imgs.bands.emplace_back(BandId::R, img);
    TileGrid gi = split(imgs, 4);
    TileGrid gm = split(mask_raster(m), 4);
    auto kept = filter_training_tiles(gi, gm);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].first.index.row_origin == 4);
    CHECK(kept[0].second.plane(BandId::MASK)(1, 1) == 1.0f);

    // All-positive masks keep everything.
    TileGrid gall = split(mask_raster(Grid::Constant(8, 4, 1.0f)), 4);
    CHECK(filter_training_tiles(gi, gall).size() == 2);

    // A positive pixel hiding in the padding must not count.
    Grid pad_m = Grid::Zero(3, 3);
    TileGrid gp = split(mask_raster(pad_m), 4);
    gp.tiles[0].data[0](3, 3) = 1.0f;  // invalid corner
    RasterStack imgs3;
    imgs3.bands.emplace_back(BandId::R, Grid::Zero(3, 3));
    CHECK(filter_training_tiles(split(imgs3, 4), gp).empty());

    CHECK_THROWS_AS(filter_training_tiles(gi, split(mask_raster(Grid::Zero(9, 4)), 4)), Error);
}
