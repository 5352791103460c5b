#pragma once

#include "orthoseg/dataset.hpp"
#include "orthoseg/metrics.hpp"
#include "orthoseg/preprocess.hpp"

#include <array>
#include <cstdint>

namespace orthoseg {

/// 256-bin histogram of the valid pixels of one channel, min-max scaled so
/// the smallest value lands in bin 0 and the largest in bin 255.
struct Histogram256 {
    std::array<std::int64_t, 256> counts{};
    float lo = 0.0f;
    float hi = 0.0f;

    std::int64_t total() const;
    int bin_of(float value) const;
};

Histogram256 build_histogram(const Grid& values, const BoolGrid& valid);

/// Threshold maximizing between-class variance, computed with exact integer
/// arithmetic; ties resolve to the smallest threshold.
int otsu_threshold(const Histogram256& h);

/// Global-threshold segmentation. Multi-channel tiles are first reduced to
/// one channel by the per-pixel mean (gray projection). Pixels whose bin
/// exceeds the threshold become 1; invalid pixels stay 0.
Grid otsu_segment(const Tile& tile);

/// Two-cluster Lloyd iterations in joint pixel-vector space (one coordinate
/// per channel). The brighter cluster — greater centroid mean across
/// channels — is the positive class. Deterministic for a fixed seed.
/// objective, when given, receives the within-cluster sum of squares after
/// each assignment step.
Grid kmeans_segment(const Tile& tile, int iters_max, std::uint64_t seed,
                    std::vector<double>* objective = nullptr);

enum class BaselineMethod { otsu, kmeans };

std::string to_string(BaselineMethod m);
BaselineMethod baseline_method_from_string(const std::string& s);

/// Segments every tile of each plot, rebuilds the full mask and scores it
/// against the ground truth. Tiles the method rejects as degenerate (e.g.
/// constant) contribute an all-zero sub-mask. One F1 per plot.
ReportRow baseline_evaluate(const DatasetManifest& manifest,
                            const std::vector<std::string>& plots,
                            const BandSelection& bands, BaselineMethod method,
                            int kmeans_iters = 50, std::uint64_t seed = 0);

}  // namespace orthoseg
