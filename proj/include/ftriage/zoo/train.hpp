#pragma once

#include "ftriage/data/preprocess.hpp"
#include "ftriage/nn/adam.hpp"
#include "ftriage/nn/network.hpp"

#include <functional>
#include <limits>
#include <optional>

namespace ftriage::zoo {

struct TrainConfig {
    std::size_t max_epochs = 200;
    std::size_t batch_size = 128;
    nn::AdamHyper adam;
    std::size_t patience = 15;
    std::uint64_t seed = 0;
    // Hard cap on optimizer steps; the epoch in progress is cut short.
    std::optional<std::size_t> max_steps;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    std::size_t steps = 0;
    bool stopped_early = false;

    bool operator==(const TrainHistory&) const = default;
};

/// Patience bookkeeping on validation loss. Strict improvement resets the
/// counter; `patience` epochs without one request a stop.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    /// Returns true when training should stop after this epoch.
    bool update(std::size_t epoch, double val_loss);
    bool improved() const noexcept { return improved_; }
    std::size_t best_epoch() const noexcept { return best_epoch_; }
    double best_loss() const noexcept { return best_loss_; }

private:
    std::size_t patience_;
    std::size_t best_epoch_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
    std::size_t since_best_ = 0;
    bool improved_ = false;
};

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;
};

/// Eval-mode accuracy and mean cross-entropy. Throws InputError when empty.
EvalResult evaluate(const nn::Network& network, const data::Dataset& dataset, const data::NormalizationStats& stats,
                    std::size_t batch_size = 256);

/// Adam training with validation-loss early stopping. Parameter masks and
/// batch-norm tracking flags already set on the network are honored. On return
/// the network holds the parameters of the best validation epoch.
/// Non-finite losses raise NumericError naming epoch, batch and layer.
TrainHistory train(nn::Network& network, const data::Dataset& train_set, const data::Dataset& val_set,
                   const data::NormalizationStats& stats, const TrainConfig& config);

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);
std::string history_csv(const TrainHistory& history);

} // namespace ftriage::zoo
