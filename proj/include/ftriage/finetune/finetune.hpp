#pragma once

#include "ftriage/susceptibility/ranking.hpp"
#include "ftriage/zoo/train.hpp"

#include <functional>
#include <map>

namespace ftriage::finetune {

using susceptibility::FilterRanking;
using susceptibility::FilterSelection;
using susceptibility::SelectionMode;

/// Layers treated as the classifier head: every dense layer, or the last conv
/// (and its batch norm) when the network has no dense layer.
std::vector<std::string> classifier_layers(const nn::Network& network);

/// One mask per parameterized layer. Selected channels of targeted convs are
/// trainable, as are the matching channels of the batch norm right after
/// them; everything else is frozen except the classifier when
/// freeze_classifier is false. Throws ConfigError on unknown layers or an F
/// mismatch.
std::vector<nn::TrainabilityMask> build_masks(const nn::Network& network, std::span<const FilterSelection> selections,
                                              bool freeze_classifier = true);

/// Installs the masks on the parameters and turns batch-norm statistics
/// tracking on only in targeted layers (those with any trainable channel).
void apply_masks(nn::Network& network, std::span<const nn::TrainabilityMask> masks);

struct FinetuneConfig {
    zoo::TrainConfig train = default_train();
    bool freeze_classifier = true;

    static zoo::TrainConfig default_train() {
        zoo::TrainConfig t;
        t.adam.learning_rate = 1e-4;
        t.max_epochs = 100;
        t.patience = 10;
        return t;
    }
};

struct FinetuneResult {
    nn::Network network;
    zoo::TrainHistory history;
    std::size_t trainable_params = 0;
};

/// Copies `base`, installs the masks and trains on the distorted data.
FinetuneResult finetune(const nn::Network& base, std::span<const nn::TrainabilityMask> masks,
                        const data::Dataset& noisy_train, const data::Dataset& noisy_val,
                        const data::NormalizationStats& stats, const FinetuneConfig& config);

struct CurveConfig {
    std::vector<std::string> layers;
    double fraction = 0.25;
    std::vector<SelectionMode> modes{SelectionMode::most, SelectionMode::least, SelectionMode::all};
    std::vector<std::size_t> train_sizes;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    FinetuneConfig finetune;

    void validate() const;
};

struct CurveRow {
    SelectionMode mode = SelectionMode::most;
    std::size_t train_size = 0;
    std::uint64_t seed = 0;
    double noisy_test_acc = 0.0;
    double clean_test_acc = 0.0;
    std::size_t trainable_params = 0;
    std::size_t epochs_run = 0;
};

/// Draws the (train, validation) sample for one cell: n images for gradient
/// steps plus ceil(n/4) for early stopping, disjoint, from the distorted pool.
std::pair<data::Dataset, data::Dataset> draw_sample(const data::Dataset& pool, std::size_t n, std::uint64_t seed);

using CellHook = std::function<void(const CurveRow&, const nn::Network&)>;

/// Fine-tunes a fresh copy of `base` for every (mode, size, seed) cell. The
/// optional hook sees each finished cell with its fine-tuned network.
std::vector<CurveRow> accuracy_curve(const nn::Network& base, const std::map<std::string, FilterRanking>& rankings,
                                     const CurveConfig& config, const data::Dataset& noisy_pool,
                                     const data::Dataset& noisy_test, const data::Dataset& clean_test,
                                     const data::NormalizationStats& stats, const CellHook& on_cell = {});

std::string curve_csv(std::span<const CurveRow> rows);
/// Per (mode, train_size) median over seeds.
std::string curve_summary_csv(std::span<const CurveRow> rows);
double median(std::vector<double> values);

struct DisparityHeatmap {
    std::string layer_id;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t filters = 0;
    std::vector<std::uint32_t> cells;  // row-major Hamming distances
    std::uint64_t total = 0;
};

/// Per location Hamming distance between the binarized (value > 0) channel
/// vectors of the two images at conv layer `layer_id`.
DisparityHeatmap invariance_heatmap(const nn::Network& network, const data::Dataset& clean, std::size_t clean_index,
                                    const data::Dataset& distorted, std::size_t distorted_index,
                                    const data::NormalizationStats& stats, const std::string& layer_id);

std::string heatmap_csv(const DisparityHeatmap& h);

} // namespace ftriage::finetune
