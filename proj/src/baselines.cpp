#include "orthoseg/baselines.hpp"

#include "orthoseg/tensor.hpp"

#include <cmath>

namespace orthoseg {

std::int64_t Histogram256::total() const {
    std::int64_t t = 0;
    for (std::int64_t c : counts) t += c;
    return t;
}

int Histogram256::bin_of(float value) const {
    const double scaled = (double(value) - lo) * 255.0 / (double(hi) - lo);
    const long b = std::lround(scaled);
    return b < 0 ? 0 : (b > 255 ? 255 : static_cast<int>(b));
}

Histogram256 build_histogram(const Grid& values, const BoolGrid& valid) {
    if (values.rows() != valid.rows() || values.cols() != valid.cols())
        throw Error("histogram grids must share a shape");
    Histogram256 h;
    bool seen = false;
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            if (!valid(i, j)) continue;
            const float v = values(i, j);
            if (!seen) {
                h.lo = h.hi = v;
                seen = true;
            } else {
                h.lo = std::min(h.lo, v);
                h.hi = std::max(h.hi, v);
            }
        }
    if (!seen || h.lo == h.hi) throw Error("degenerate histogram");
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index j = 0; j < values.cols(); ++j)
            if (valid(i, j)) ++h.counts[static_cast<std::size_t>(h.bin_of(values(i, j)))];
    return h;
}

int otsu_threshold(const Histogram256& h) {
    const std::int64_t n = h.total();
    if (n == 0) throw Error("degenerate histogram");
    std::int64_t sum_all = 0;
    for (int b = 0; b < 256; ++b) sum_all += std::int64_t(b) * h.counts[b];

    // Between-class variance at threshold t is proportional to
    // (sum0*c1 - sum1*c0)^2 / (c0*c1). Candidates are compared exactly by
    // cross-multiplying, so the argmax never depends on rounding.
    int best_t = -1;
    __int128 best_num2 = 0;
    std::int64_t best_den = 1;
    std::int64_t c0 = 0, sum0 = 0;
    for (int t = 0; t < 255; ++t) {
        c0 += h.counts[t];
        sum0 += std::int64_t(t) * h.counts[t];
        const std::int64_t c1 = n - c0;
        if (c0 == 0 || c1 == 0) continue;
        const std::int64_t sum1 = sum_all - sum0;
        const __int128 num = __int128(sum0) * c1 - __int128(sum1) * c0;
        const __int128 num2 = num * num;
        const std::int64_t den = c0 * c1;
        if (best_t < 0 || num2 * best_den > best_num2 * den) {
            best_t = t;
            best_num2 = num2;
            best_den = den;
        }
    }
    if (best_t < 0) throw Error("degenerate histogram");
    return best_t;
}

namespace {

// Per-pixel mean across channels; single-channel tiles pass through.
Grid gray_projection(const Tile& tile) {
    if (tile.channels() == 0) throw Error("tile has no channels");
    Grid g = tile.data[0];
    for (int c = 1; c < tile.channels(); ++c) g += tile.data[static_cast<std::size_t>(c)];
    return g / static_cast<float>(tile.channels());
}

}  // namespace

Grid otsu_segment(const Tile& tile) {
    const Grid gray = gray_projection(tile);
    const Histogram256 h = build_histogram(gray, tile.valid);
    const int t = otsu_threshold(h);
    Grid mask = Grid::Zero(gray.rows(), gray.cols());
    for (Eigen::Index i = 0; i < gray.rows(); ++i)
        for (Eigen::Index j = 0; j < gray.cols(); ++j)
            if (tile.valid(i, j) && h.bin_of(gray(i, j)) > t) mask(i, j) = 1.0f;
    return mask;
}

namespace {

using FeatRow = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double dist2(const FeatRow& feats, Eigen::Index r, const Eigen::RowVectorXd& c) {
    return (feats.row(r) - c).squaredNorm();
}

Eigen::Index farthest_from(const FeatRow& feats, const Eigen::RowVectorXd& c) {
    Eigen::Index best = 0;
    double best_d = -1.0;
    for (Eigen::Index r = 0; r < feats.rows(); ++r) {
        const double d = dist2(feats, r, c);
        if (d > best_d) {
            best_d = d;
            best = r;
        }
    }
    return best;
}

}  // namespace

Grid kmeans_segment(const Tile& tile, int iters_max, std::uint64_t seed,
                    std::vector<double>* objective) {
    if (iters_max < 1) throw Error("kmeans needs at least one iteration");
    const int s = tile.size();
    const int C = tile.channels();
    if (C == 0) throw Error("tile has no channels");

    std::vector<std::pair<int, int>> pixels;
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j)
            if (tile.valid(i, j)) pixels.emplace_back(i, j);
    const Eigen::Index P = static_cast<Eigen::Index>(pixels.size());
    if (P < 2) throw Error("degenerate input");

    FeatRow feats(P, C);
    for (Eigen::Index r = 0; r < P; ++r)
        for (int c = 0; c < C; ++c)
            feats(r, c) = tile.data[static_cast<std::size_t>(c)](pixels[r].first,
                                                                 pixels[r].second);

    std::mt19937_64 rng(seed);
    Eigen::Index first = std::min<Eigen::Index>(
        static_cast<Eigen::Index>(uniform_unit(rng()) * double(P)), P - 1);
    Eigen::RowVectorXd cent0 = feats.row(first);
    const Eigen::Index second = farthest_from(feats, cent0);
    if (dist2(feats, second, cent0) == 0.0) throw Error("degenerate input");
    Eigen::RowVectorXd cent1 = feats.row(second);

    std::vector<std::uint8_t> assign(static_cast<std::size_t>(P), 0), prev;
    if (objective) objective->clear();
    for (int iter = 0; iter < iters_max; ++iter) {
        prev = assign;
        double wcss = 0.0;
        for (Eigen::Index r = 0; r < P; ++r) {
            const double d0 = dist2(feats, r, cent0);
            const double d1 = dist2(feats, r, cent1);
            assign[static_cast<std::size_t>(r)] = d0 <= d1 ? 0 : 1;
            wcss += std::min(d0, d1);
        }
        if (objective) objective->push_back(wcss);
        if (iter > 0 && assign == prev) break;

        Eigen::RowVectorXd sum0 = Eigen::RowVectorXd::Zero(C);
        Eigen::RowVectorXd sum1 = Eigen::RowVectorXd::Zero(C);
        Eigen::Index n0 = 0, n1 = 0;
        for (Eigen::Index r = 0; r < P; ++r) {
            if (assign[static_cast<std::size_t>(r)] == 0) {
                sum0 += feats.row(r);
                ++n0;
            } else {
                sum1 += feats.row(r);
                ++n1;
            }
        }
        if (n0 == 0)
            cent0 = feats.row(farthest_from(feats, cent1));
        else
            cent0 = sum0 / double(n0);
        if (n1 == 0)
            cent1 = feats.row(farthest_from(feats, cent0));
        else
            cent1 = sum1 / double(n1);
    }

    const std::uint8_t positive = cent1.mean() >= cent0.mean() ? 1 : 0;
    Grid mask = Grid::Zero(s, s);
    for (Eigen::Index r = 0; r < P; ++r)
        if (assign[static_cast<std::size_t>(r)] == positive)
            mask(pixels[r].first, pixels[r].second) = 1.0f;
    return mask;
}

std::string to_string(BaselineMethod m) {
    return m == BaselineMethod::otsu ? "otsu" : "kmeans";
}

BaselineMethod baseline_method_from_string(const std::string& s) {
    if (s == "otsu") return BaselineMethod::otsu;
    if (s == "kmeans") return BaselineMethod::kmeans;
    throw Error("unknown baseline method '" + s + "'");
}

ReportRow baseline_evaluate(const DatasetManifest& manifest,
                            const std::vector<std::string>& plots,
                            const BandSelection& bands, BaselineMethod method,
                            int kmeans_iters, std::uint64_t seed) {
    if (plots.empty()) throw Error("baseline_evaluate needs at least one plot");
    ReportRow row;
    row.group = bands.label();
    row.method = to_string(method);
    for (const auto& name : plots) {
        const LoadedPlot lp = load_plot(manifest.plot(name));
        const TileGrid image_tiles = split(lp.image, manifest.tile_size);

        std::vector<Grid> sub_masks;
        sub_masks.reserve(image_tiles.tiles.size());
        std::uint64_t tile_counter = 0;
        for (const Tile& t : image_tiles.tiles) {
            const Tile selected = select_bands(t, bands);
            Grid m;
            try {
                m = method == BaselineMethod::otsu
                        ? otsu_segment(selected)
                        : kmeans_segment(selected, kmeans_iters, seed + tile_counter);
            } catch (const Error&) {
                m = Grid::Zero(t.size(), t.size());  // degenerate tile: background
            }
            sub_masks.push_back(std::move(m));
            ++tile_counter;
        }

        const RasterStack pred = rebuild(image_tiles, sub_masks);
        const Grid truth = mask_to_binary(lp.mask.band(BandId::MASK), lp.mask.nodata);
        const BoolGrid all = BoolGrid::Constant(truth.rows(), truth.cols(), true);
        const ConfusionCounts c = confusion(pred.band(BandId::MASK), truth, all);
        row.fold_names.push_back(name);
        row.scores.push_back(f1(c));
    }
    return row;
}

}  // namespace orthoseg
