#include "orthoseg/trainer.hpp"

#include "orthoseg/loss.hpp"
#include "orthoseg/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace orthoseg {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw Error("learning_rate must be positive");
    if (weight_decay < 0.0) throw Error("weight_decay must be non-negative");
    if (pos_weight <= 0.0) throw Error("pos_weight must be positive");
    if (epochs < 0) throw Error("epochs must be non-negative");
    if (batch_size < 1) throw Error("batch_size must be at least 1");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw Error("val_fraction must be in (0,1)");
    augment.validate();
}

void FoldSpec::validate(const DatasetManifest& manifest) const {
    if (name.empty()) throw Error("fold name is empty");
    if (train_plots.empty()) throw Error("fold '" + name + "' has no training plots");
    for (const auto& p : train_plots) {
        if (!manifest.has_plot(p))
            throw Error("fold '" + name + "' references unknown plot '" + p + "'");
        if (p == test_plot)
            throw Error("fold '" + name + "' uses plot '" + p +
                        "' for both training and testing");
    }
    if (!manifest.has_plot(test_plot))
        throw Error("fold '" + name + "' references unknown plot '" + test_plot + "'");
}

json RunRecord::to_json() const {
    json ep = json::array();
    for (const auto& e : epochs)
        ep.push_back({{"train_loss", e.train_loss}, {"val_f1", e.val_f1}});
    return {{"fold", fold},
            {"bands", bands},
            {"arch", arch},
            {"epochs", ep},
            {"best_epoch", best_epoch},
            {"best_val_f1", best_val_f1},
            {"test_f1", test_f1},
            {"seed", seed},
            {"checkpoint_path", checkpoint_path}};
}

RunRecord RunRecord::from_json(const json& j) {
    RunRecord r;
    r.fold = j.at("fold").get<std::string>();
    r.bands = j.at("bands").get<std::string>();
    r.arch = j.at("arch").get<std::string>();
    for (const auto& e : j.at("epochs"))
        r.epochs.push_back({e.at("train_loss").get<double>(), e.at("val_f1").get<double>()});
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val_f1 = j.at("best_val_f1").get<double>();
    r.test_f1 = j.at("test_f1").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.checkpoint_path = j.at("checkpoint_path").get<std::string>();
    return r;
}

void RunRecord::save(const fs::path& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write run record " + path.string());
    os << to_json().dump(2) << "\n";
}

RunRecord RunRecord::load(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open run record " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw Error("run record " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

namespace {

// Standardized, band-selected inference input for one tile.
Tile prepare_tile(const Tile& t, const BandSelection& bands) {
    return standardize(select_bands(t, bands));
}

Grid binary_target(const Grid& mask_plane) {
    Grid g(mask_plane.rows(), mask_plane.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            g(i, j) = mask_plane(i, j) == 1.0f ? 1.0f : 0.0f;
    return g;
}

std::uint64_t draw_index(std::mt19937_64& rng, std::uint64_t n) {
    return std::min<std::uint64_t>(static_cast<std::uint64_t>(uniform_unit(rng()) * double(n)),
                                   n - 1);
}

}  // namespace

RasterStack predict_raster(const Checkpoint& ckpt, const RasterStack& image,
                           int tile_size, double threshold) {
    const BandSelection bands(ckpt.bands);
    const TileGrid grid = split(image, tile_size);
    std::vector<Grid> sub_masks;
    sub_masks.reserve(grid.tiles.size());
    for (const Tile& t : grid.tiles)
        sub_masks.push_back(
            predict_mask(ckpt.params, ckpt.config, prepare_tile(t, bands), threshold));
    RasterStack out = rebuild(grid, sub_masks);
    out.geo_transform = image.geo_transform;
    return out;
}

double evaluate_plot(const Checkpoint& ckpt, const LoadedPlot& plot, int tile_size,
                     double threshold) {
    const RasterStack pred = predict_raster(ckpt, plot.image, tile_size, threshold);
    const Grid truth = mask_to_binary(plot.mask.band(BandId::MASK), plot.mask.nodata);
    const BoolGrid all = BoolGrid::Constant(truth.rows(), truth.cols(), true);
    return f1(confusion(pred.band(BandId::MASK), truth, all));
}

RunRecord train(const DatasetManifest& manifest, const FoldSpec& fold,
                const BandSelection& bands, const NetworkConfig& netcfg,
                const TrainConfig& traincfg, const fs::path& checkpoint_path,
                Checkpoint* out_checkpoint) {
    fold.validate(manifest);
    traincfg.validate();
    netcfg.validate(manifest.tile_size);
    if (netcfg.in_channels != bands.channels())
        throw Error("network expects " + std::to_string(netcfg.in_channels) +
                    " channels but the band selection has " +
                    std::to_string(bands.channels()));

    // Gather retained (positive-mask) training tile pairs across train plots.
    std::vector<std::pair<Tile, Tile>> pool;
    for (const auto& plot_name : fold.train_plots) {
        const LoadedPlot lp = load_plot(manifest.plot(plot_name));
        const TileGrid image_tiles = split(lp.image, manifest.tile_size);
        const TileGrid mask_tiles = split(lp.mask, manifest.tile_size);
        auto pairs = filter_training_tiles(image_tiles, mask_tiles);
        for (auto& pr : pairs) {
            pr.first = select_bands(pr.first, bands);
            pool.push_back(std::move(pr));
        }
    }
    if (pool.empty())
        throw Error("fold '" + fold.name + "' has no training tiles with vine pixels");

    RunRecord record;
    record.fold = fold.name;
    record.bands = bands.label();
    record.arch = to_string(netcfg.arch);
    record.seed = traincfg.seed;

    std::mt19937_64 rng(traincfg.seed);
    Parameters<float> params = build<float>(netcfg, traincfg.seed);
    Parameters<float> best_params;

    if (traincfg.epochs > 0) {
        const std::size_t n = pool.size();
        if (n < 2)
            throw Error("fold '" + fold.name +
                        "' needs at least two retained tiles to hold out validation");
        // seeded shuffle, then carve the validation slice off the front
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(order[i], order[draw_index(rng, i + 1)]);
        std::size_t val_n = static_cast<std::size_t>(std::lround(traincfg.val_fraction * double(n)));
        val_n = std::clamp<std::size_t>(val_n, 1, n - 1);

        std::vector<std::size_t> val_idx(order.begin(), order.begin() + val_n);
        std::vector<std::size_t> train_idx(order.begin() + val_n, order.end());

        // validation inputs never change: standardize once
        std::vector<Tile> val_inputs;
        std::vector<Grid> val_truths;
        for (std::size_t i : val_idx) {
            val_inputs.push_back(standardize(pool[i].first));
            val_truths.push_back(binary_target(pool[i].second.data[0]));
        }

        AdamWConfig ocfg;
        ocfg.lr = traincfg.learning_rate;
        ocfg.weight_decay = traincfg.weight_decay;
        AdamW<float> opt(ocfg);

        const int S = manifest.tile_size;
        const int C = bands.channels();
        int stale = 0;
        for (int epoch = 0; epoch < traincfg.epochs; ++epoch) {
            for (std::size_t i = train_idx.size() - 1; i > 0; --i)
                std::swap(train_idx[i], train_idx[draw_index(rng, i + 1)]);

            double loss_sum = 0.0;
            for (std::size_t start = 0; start < train_idx.size();
                 start += static_cast<std::size_t>(traincfg.batch_size)) {
                const std::size_t stop = std::min(
                    train_idx.size(), start + static_cast<std::size_t>(traincfg.batch_size));
                const int B = static_cast<int>(stop - start);

                Tensor<float> x(B, C, S, S), y(B, 1, S, S);
                for (int b = 0; b < B; ++b) {
                    const auto& [img, msk] = pool[train_idx[start + b]];
                    auto [aug_img, aug_msk] = augment(img, msk, traincfg.augment, rng);
                    const Tile ready = standardize(aug_img);
                    for (int c = 0; c < C; ++c)
                        x.plane(b, c) = ready.data[static_cast<std::size_t>(c)];
                    y.plane(b, 0) = binary_target(aug_msk.data[0]);
                }

                ForwardTrace<float> trace;
                EncoderOut<float> eo;
                const Tensor<float> logits =
                    forward(params, netcfg, x, Mode::train, rng, &trace, &eo);
                const auto lr = weighted_bce_loss(logits, y, traincfg.pos_weight);
                if (!std::isfinite(lr.loss))
                    throw Error("training diverged (non-finite loss) in epoch " +
                                std::to_string(epoch));
                const auto grads = backward(params, netcfg, trace, eo, lr.grad);
                opt.step(params, grads);
                loss_sum += lr.loss * B;
            }

            // micro-averaged validation F1 at threshold 0.5
            ConfusionCounts vc;
            for (std::size_t v = 0; v < val_inputs.size(); ++v) {
                const Grid pred = predict_mask(params, netcfg, val_inputs[v]);
                vc += confusion(pred, val_truths[v], val_inputs[v].valid);
            }

            EpochStats es;
            es.train_loss = loss_sum / double(train_idx.size());
            es.val_f1 = f1(vc);
            record.epochs.push_back(es);

            if (record.best_epoch < 0 || es.val_f1 > record.best_val_f1) {
                record.best_epoch = epoch;
                record.best_val_f1 = es.val_f1;
                best_params = params;
                stale = 0;
            } else if (traincfg.early_stop.patience > 0 &&
                       ++stale >= traincfg.early_stop.patience) {
                break;
            }
        }

        if (traincfg.early_stop.keep_best && record.best_epoch >= 0)
            params = std::move(best_params);
    }

    Checkpoint ckpt;
    ckpt.config = netcfg;
    ckpt.bands = bands.bands;
    ckpt.params = std::move(params);

    const LoadedPlot test_plot = load_plot(manifest.plot(fold.test_plot));
    record.test_f1 = evaluate_plot(ckpt, test_plot, manifest.tile_size);

    if (!checkpoint_path.empty()) {
        save_checkpoint(checkpoint_path, ckpt);
        record.checkpoint_path = checkpoint_path.string();
    }
    if (out_checkpoint) *out_checkpoint = std::move(ckpt);
    return record;
}

ReportRow cross_validate(const DatasetManifest& manifest,
                         const std::vector<FoldSpec>& folds, const BandSelection& bands,
                         const NetworkConfig& netcfg, const TrainConfig& traincfg,
                         int repetitions, std::vector<RunRecord>* records) {
    if (folds.empty()) throw Error("cross_validate needs at least one fold");
    if (repetitions < 1) throw Error("repetitions must be at least 1");
    for (const auto& f : folds) f.validate(manifest);

    // all derived seeds drawn up front so runs cannot influence each other
    std::mt19937_64 seeder(traincfg.seed);
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < folds.size() * static_cast<std::size_t>(repetitions); ++i)
        seeds.push_back(seeder());

    ReportRow row;
    row.group = bands.label();
    row.method = to_string(netcfg.arch);
    std::size_t k = 0;
    for (const auto& fold : folds) {
        double sum = 0.0;
        for (int rep = 0; rep < repetitions; ++rep, ++k) {
            TrainConfig tc = traincfg;
            tc.seed = seeds[k];
            const RunRecord r = train(manifest, fold, bands, netcfg, tc);
            sum += r.test_f1;
            if (records) records->push_back(r);
        }
        row.fold_names.push_back(fold.name);
        row.scores.push_back(sum / repetitions);
    }
    return row;
}

}  // namespace orthoseg
