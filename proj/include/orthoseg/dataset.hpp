#pragma once

#include "orthoseg/tiler.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace orthoseg {

enum class Modality { MS, HD };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// One vineyard plot: an image raster plus its ground-truth mask.
struct PlotEntry {
    std::string name;
    std::filesystem::path raster_path;
    std::filesystem::path mask_path;
    Modality modality = Modality::MS;
};

/// JSON-backed dataset description; paths are resolved against the manifest
/// file's directory.
struct DatasetManifest {
    std::vector<PlotEntry> plots;
    int tile_size = 240;

    const PlotEntry& plot(const std::string& name) const;
    bool has_plot(const std::string& name) const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Image + binary mask of one plot, ingested and dimension-checked.
struct LoadedPlot {
    RasterStack image;
    RasterStack mask;
};

LoadedPlot load_plot(const PlotEntry& entry);

/// Positive/negative pixel fractions over the retained (positive) tiles.
struct ClassDistribution {
    double positive_fraction = 0.0;
    double negative_fraction = 0.0;
    std::int64_t tile_count = 0;
};

/// Computes class fractions over all valid pixels of the tiles that contain
/// at least one positive pixel; tile geometry comes from `tiles`, values
/// from the MASK band of `mask`.
ClassDistribution class_distribution(const RasterStack& mask, const TileGrid& tiles);

}  // namespace orthoseg
