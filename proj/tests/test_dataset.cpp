#include <doctest.h>

#include "orthoseg/dataset.hpp"

#include <filesystem>
#include <fstream>

using namespace orthoseg;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
    static fs::path d = [] {
        fs::path p = fs::temp_directory_path() / "orthoseg_test_dataset";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return d;
}

void save_plot_files(const fs::path& dir, const std::string& stem, int h, int w,
                     float image_value, const Grid& mask) {
    RasterStack img;
    img.bands.emplace_back(BandId::R, Grid::Constant(h, w, image_value));
    img.bands.emplace_back(BandId::NIR, Grid::Constant(h, w, image_value * 2));
    save_raster(img, dir / (stem + ".hdr"));
    RasterStack m;
    m.bands.emplace_back(BandId::MASK, mask);
    save_raster(m, dir / (stem + "_mask.hdr"));
}

}  // namespace

TEST_CASE("manifest round-trips through JSON") {
    fs::path dir = tmpdir() / "mani";
    fs::create_directories(dir);
    save_plot_files(dir, "esa", 6, 6, 1.0f, Grid::Zero(6, 6));
    save_plot_files(dir, "val", 4, 4, 2.0f, Grid::Zero(4, 4));

    DatasetManifest m;
    m.tile_size = 240;
    m.plots.push_back({"esa", "esa.hdr", "esa_mask.hdr", Modality::MS});
    m.plots.push_back({"val", "val.hdr", "val_mask.hdr", Modality::HD});
    fs::path mp = dir / "dataset.json";
    save_manifest(m, mp);

    DatasetManifest r = load_manifest(mp);
    CHECK(r.tile_size == 240);
    REQUIRE(r.plots.size() == 2);
    CHECK(r.plot("esa").modality == Modality::MS);
    CHECK(r.plot("val").modality == Modality::HD);
    CHECK(r.has_plot("esa"));
    CHECK_FALSE(r.has_plot("quinta"));
    CHECK_THROWS_AS(r.plot("quinta"), Error);
    // Paths come back resolved against the manifest directory.
    CHECK(fs::exists(r.plot("esa").raster_path));
}

TEST_CASE("manifest validation failures") {
    fs::path dir = tmpdir() / "bad";
    fs::create_directories(dir);
    save_plot_files(dir, "a", 4, 4, 1.0f, Grid::Zero(4, 4));

    DatasetManifest dupe;
    dupe.plots.push_back({"a", "a.hdr", "a_mask.hdr", Modality::MS});
    dupe.plots.push_back({"a", "a.hdr", "a_mask.hdr", Modality::MS});
    fs::path mp = dir / "dupe.json";
    save_manifest(dupe, mp);
    CHECK_THROWS_AS(load_manifest(mp), Error);

    DatasetManifest ghost;
    ghost.plots.push_back({"g", "missing.hdr", "a_mask.hdr", Modality::MS});
    fs::path gp = dir / "ghost.json";
    save_manifest(ghost, gp);
    CHECK_THROWS_AS(load_manifest(gp), Error);

    std::ofstream(dir / "garbage.json") << "{not json";
    CHECK_THROWS_AS(load_manifest(dir / "garbage.json"), Error);
    CHECK_THROWS_AS(load_manifest(dir / "absent.json"), Error);
}

TEST_CASE("load_plot checks image/mask dimensions") {
    fs::path dir = tmpdir() / "plots";
    fs::create_directories(dir);
    Grid mask = Grid::Zero(6, 6);
    mask(1, 2) = 1.0f;
    save_plot_files(dir, "ok", 6, 6, 3.0f, mask);

    PlotEntry e{"ok", dir / "ok.hdr", dir / "ok_mask.hdr", Modality::MS};
    LoadedPlot p = load_plot(e);
    CHECK(p.image.width() == 6);
    CHECK(p.mask.band(BandId::MASK)(1, 2) == 1.0f);

    save_plot_files(dir, "small", 6, 6, 3.0f, Grid::Zero(6, 6));
    RasterStack wrong;
    wrong.bands.emplace_back(BandId::MASK, Grid::Zero(4, 6));
    save_raster(wrong, dir / "small_mask.hdr");
    PlotEntry bad{"small", dir / "small.hdr", dir / "small_mask.hdr", Modality::MS};
    CHECK_THROWS_AS(load_plot(bad), Error);
}

TEST_CASE("class distribution over a single tile") {
    Grid m = Grid::Zero(4, 4);
    m(0, 0) = m(0, 1) = m(1, 0) = m(1, 1) = 1.0f;  // 4 of 16 = 25%
    RasterStack mask;
    mask.bands.emplace_back(BandId::MASK, m);
    TileGrid tiles = split(mask, 4);
    ClassDistribution d = class_distribution(mask, tiles);
    CHECK(d.positive_fraction == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(d.negative_fraction == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(d.tile_count == 1);
    CHECK(d.positive_fraction + d.negative_fraction == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("class distribution counts only retained tiles") {
    // Two tiles: left half all zeros (dropped), right half one positive pixel.
    Grid m = Grid::Zero(4, 8);
    m(2, 5) = 1.0f;
    RasterStack mask;
    mask.bands.emplace_back(BandId::MASK, m);
    TileGrid tiles = split(mask, 4);
    ClassDistribution d = class_distribution(mask, tiles);
    CHECK(d.tile_count == 1);
    CHECK(d.positive_fraction == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
}

TEST_CASE("class distribution excludes nodata pixels from the denominator") {
    Grid m = Grid::Zero(4, 4);
    m(0, 0) = 1.0f;
    m(3, 3) = -10000.0f;
    RasterStack mask;
    mask.bands.emplace_back(BandId::MASK, m);
    mask.nodata = -10000.0f;
    TileGrid tiles = split(mask, 4);
    ClassDistribution d = class_distribution(mask, tiles);
    CHECK(d.positive_fraction == doctest::Approx(1.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("an all-background mask has no retained tiles") {
    RasterStack mask;
    mask.bands.emplace_back(BandId::MASK, Grid::Zero(4, 4));
    TileGrid tiles = split(mask, 4);
    CHECK_THROWS_AS(class_distribution(mask, tiles), Error);
}
