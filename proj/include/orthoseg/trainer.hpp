#pragma once

#include "orthoseg/checkpoint.hpp"
#include "orthoseg/dataset.hpp"
#include "orthoseg/metrics.hpp"
#include "orthoseg/preprocess.hpp"

#include <nlohmann/json.hpp>

namespace orthoseg {

struct EarlyStopConfig {
    int patience = 5;       // epochs without a new best validation F1; <=0 disables
    bool keep_best = true;  // restore the best-F1 parameters when done
};

struct TrainConfig {
    double learning_rate = 0.000171;
    double weight_decay = 0.00061;
    double pos_weight = 5.0;
    int epochs = 20;
    int batch_size = 8;
    std::uint64_t seed = 0;
    EarlyStopConfig early_stop;
    double val_fraction = 0.15;
    AugmentationConfig augment;

    void validate() const;
};

/// One cross-validation fold: which plots train, which single plot tests.
struct FoldSpec {
    std::string name;
    std::vector<std::string> train_plots;
    std::string test_plot;

    void validate(const DatasetManifest& manifest) const;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_f1 = 0.0;
};

/// Everything one training run produced, JSON-serializable.
struct RunRecord {
    std::string fold;
    std::string bands;
    std::string arch;
    std::vector<EpochStats> epochs;
    int best_epoch = -1;  // -1 when no epoch ran
    double best_val_f1 = 0.0;
    double test_f1 = 0.0;
    std::uint64_t seed = 0;
    std::string checkpoint_path;

    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static RunRecord load(const std::filesystem::path& path);
};

/// Full-raster inference: split, band-select, standardize, network, rebuild.
/// The returned MASK raster copies the input's dimensions and geo_transform.
RasterStack predict_raster(const Checkpoint& ckpt, const RasterStack& image,
                           int tile_size, double threshold = 0.5);

/// F1 of predict_raster against the plot's ground truth, over all pixels.
double evaluate_plot(const Checkpoint& ckpt, const LoadedPlot& plot, int tile_size,
                     double threshold = 0.5);

/// Trains one fold: seeded validation split of the retained training tiles,
/// per-epoch augment/standardize/batch/step, validation-F1 early stopping,
/// then test-plot evaluation. Deterministic for fixed (config, seed, data).
/// When checkpoint_path is non-empty the final parameters are saved there;
/// out_checkpoint (optional) receives them in memory.
RunRecord train(const DatasetManifest& manifest, const FoldSpec& fold,
                const BandSelection& bands, const NetworkConfig& netcfg,
                const TrainConfig& traincfg,
                const std::filesystem::path& checkpoint_path = {},
                Checkpoint* out_checkpoint = nullptr);

/// Repeats train() per fold with derived seeds; each fold's score is the
/// mean test F1 over repetitions, reported as one table row.
ReportRow cross_validate(const DatasetManifest& manifest,
                         const std::vector<FoldSpec>& folds, const BandSelection& bands,
                         const NetworkConfig& netcfg, const TrainConfig& traincfg,
                         int repetitions, std::vector<RunRecord>* records = nullptr);

}  // namespace orthoseg
