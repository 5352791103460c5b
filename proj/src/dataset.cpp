#include "orthoseg/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

namespace orthoseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Modality m) { return m == Modality::MS ? "MS" : "HD"; }

Modality modality_from_string(const std::string& s) {
    if (s == "MS") return Modality::MS;
    if (s == "HD") return Modality::HD;
    throw Error("unknown modality '" + s + "' (expected MS or HD)");
}

const PlotEntry& DatasetManifest::plot(const std::string& name) const {
    for (const auto& p : plots)
        if (p.name == name) return p;
    throw Error("unknown plot '" + name + "' in manifest");
}

bool DatasetManifest::has_plot(const std::string& name) const {
    return std::any_of(plots.begin(), plots.end(),
                       [&](const PlotEntry& p) { return p.name == name; });
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("manifest not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("malformed manifest " + path.string() + ": " + e.what());
    }

    DatasetManifest m;
    m.tile_size = j.value("tile_size", 240);
    if (m.tile_size < 1) throw Error("manifest tile_size must be positive");
    const fs::path base = path.parent_path();

    std::set<std::string> names;
    for (const auto& p : j.at("plots")) {
        PlotEntry e;
        e.name = p.at("name").get<std::string>();
        e.raster_path = base / p.at("raster").get<std::string>();
        e.mask_path = base / p.at("mask").get<std::string>();
        e.modality = modality_from_string(p.value("modality", "MS"));
        if (!names.insert(e.name).second)
            throw Error("duplicate plot name '" + e.name + "' in manifest");
        auto resolvable = [](const fs::path& fp) {
            if (fs::is_regular_file(fp)) return true;
            // Sidecar rasters may be referenced by their basename.
            fs::path hdr = fp;
            hdr += ".hdr";
            return fs::is_regular_file(hdr);
        };
        if (!resolvable(e.raster_path))
            throw Error("manifest raster path not resolvable: " + e.raster_path.string());
        if (!resolvable(e.mask_path))
            throw Error("manifest mask path not resolvable: " + e.mask_path.string());
        m.plots.push_back(std::move(e));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
    json j;
    j["tile_size"] = manifest.tile_size;
    j["plots"] = json::array();
    const fs::path base = path.parent_path();
    // Absolute paths are stored relative to the manifest's directory so the
    // dataset stays relocatable; relative paths are kept verbatim.
    auto portable = [&](const fs::path& fp) {
        return fp.is_absolute() ? fp.lexically_proximate(base).string() : fp.string();
    };
    for (const auto& p : manifest.plots) {
        json e;
        e["name"] = p.name;
        e["raster"] = portable(p.raster_path);
        e["mask"] = portable(p.mask_path);
        e["modality"] = to_string(p.modality);
        j["plots"].push_back(std::move(e));
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

LoadedPlot load_plot(const PlotEntry& entry) {
    LoadedPlot plot;
    plot.image = load_raster(entry.raster_path);
    plot.mask = load_raster(entry.mask_path, {BandId::MASK});
    if (plot.image.width() != plot.mask.width() || plot.image.height() != plot.mask.height())
        throw Error("plot '" + entry.name + "': raster and mask dimensions differ (" +
                    std::to_string(plot.image.width()) + "x" + std::to_string(plot.image.height()) +
                    " vs " + std::to_string(plot.mask.width()) + "x" +
                    std::to_string(plot.mask.height()) + ")");
    return plot;
}

ClassDistribution class_distribution(const RasterStack& mask, const TileGrid& tiles) {
    if (mask.width() != tiles.parent_width || mask.height() != tiles.parent_height)
        throw Error("mask/tile dimension mismatch");
    const Grid& m = mask.band(BandId::MASK);
    const float nd = mask.nodata.value_or(std::numeric_limits<float>::quiet_NaN());

    std::int64_t positives = 0, valid_total = 0, retained = 0;
    const int S = tiles.tile_size;
    for (const Tile& t : tiles.tiles) {
        std::int64_t pos = 0, val = 0;
        const int h = std::min(S, tiles.parent_height - t.index.row_origin);
        const int w = std::min(S, tiles.parent_width - t.index.col_origin);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                float v = m(t.index.row_origin + r, t.index.col_origin + c);
                if (v == nd) continue;  // nodata excluded from statistics
                ++val;
                if (v == 1.0f) ++pos;
            }
        }
        if (pos > 0) {
            ++retained;
            positives += pos;
            valid_total += val;
        }
    }
    if (retained == 0) throw Error("no positive tiles in mask");
    ClassDistribution dist;
    dist.tile_count = retained;
    dist.positive_fraction = static_cast<double>(positives) / static_cast<double>(valid_total);
    dist.negative_fraction =
        static_cast<double>(valid_total - positives) / static_cast<double>(valid_total);
    return dist;
}

}  // namespace orthoseg
