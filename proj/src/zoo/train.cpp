#include "ftriage/zoo/train.hpp"

#include "ftriage/common/bytes.hpp"
#include "ftriage/common/csv.hpp"
#include "ftriage/common/error.hpp"
#include "ftriage/common/hash.hpp"
#include "ftriage/common/parallel.hpp"
#include "ftriage/common/random.hpp"
#include "ftriage/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ftriage::zoo {

void TrainConfig::validate() const {
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (max_steps && *max_steps < 1) throw ConfigError("max_steps must be at least 1 when set");
    adam.validate();
}

bool EarlyStopping::update(std::size_t epoch, double val_loss) {
    improved_ = val_loss < best_loss_;
    if (improved_) {
        best_loss_ = val_loss;
        best_epoch_ = epoch;
        since_best_ = 0;
    } else {
        ++since_best_;
    }
    return since_best_ >= patience_;
}

EvalResult evaluate(const nn::Network& network, const data::Dataset& dataset, const data::NormalizationStats& stats,
                    std::size_t batch_size) {
    if (dataset.empty()) throw InputError("cannot evaluate on an empty dataset");
    if (batch_size == 0) throw UsageError("evaluation batch size must be positive");
    const std::size_t n = dataset.size();
    const std::size_t chunks = (n + batch_size - 1) / batch_size;
    std::vector<double> loss_sum(chunks);
    std::vector<std::size_t> correct(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t first = c * batch_size;
        const std::size_t count = std::min(batch_size, n - first);
        const auto logits = network.infer(data::make_batch(dataset, first, count, stats));
        const std::span<const int> labels(dataset.labels.data() + first, count);
        const auto r = nn::softmax_xent(logits, labels);
        loss_sum[c] = r.loss * static_cast<double>(count);
        correct[c] = r.correct;
    });
    EvalResult out;
    out.total = n;
    double total_loss = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
        total_loss += loss_sum[c];
        out.correct += correct[c];
    }
    out.loss = total_loss / static_cast<double>(n);
    out.accuracy = static_cast<double>(out.correct) / static_cast<double>(n);
    return out;
}

TrainHistory train(nn::Network& network, const data::Dataset& train_set, const data::Dataset& val_set,
                   const data::NormalizationStats& stats, const TrainConfig& config) {
    config.validate();
    if (train_set.empty()) throw InputError("training set is empty");
    if (val_set.empty()) throw InputError("validation set is empty");

    network.init_moments();
    auto params = network.params();
    nn::Network best = network;
    EarlyStopping stopper(config.patience);
    TrainHistory history;
    nn::Rng dropout_rng(mix_seed(config.seed, 0xD50Full));
    std::vector<std::size_t> order(train_set.size());

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(mix_seed(config.seed, epoch));
        shuffle<std::size_t>(order, shuffle_rng);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        bool capped = false;
        const std::size_t batches = (order.size() + config.batch_size - 1) / config.batch_size;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t first = b * config.batch_size;
            const std::span<const std::size_t> idx(order.data() + first,
                                                   std::min(config.batch_size, order.size() - first));
            const auto labels = data::gather_labels(train_set, idx);
            try {
                const auto logits = network.forward(data::make_batch(train_set, idx, stats), nn::Mode::train,
                                                    dropout_rng);
                const auto loss = nn::softmax_xent(logits, labels);
                network.backward(loss.grad);
                nn::adam_step<float>(params, config.adam, ++history.steps);
                loss_sum += loss.loss * static_cast<double>(idx.size());
                seen += idx.size();
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) + ": " +
                                   e.what());
            }
            if (config.max_steps && history.steps >= *config.max_steps) {
                capped = true;
                break;
            }
        }

        const auto val = evaluate(network, val_set, stats);
        history.epochs.push_back({epoch, loss_sum / static_cast<double>(seen), val.loss, val.accuracy});
        const bool stop = stopper.update(epoch, val.loss);
        if (stopper.improved()) best = network;
        if (stop) {
            history.stopped_early = true;
            break;
        }
        if (capped) break;
    }

    history.best_epoch = stopper.best_epoch();
    network = std::move(best);
    return history;
}

std::string history_csv(const TrainHistory& history) {
    CsvWriter csv({"epoch", "train_loss", "val_loss", "val_acc"});
    for (const auto& e : history.epochs) {
        csv.field(static_cast<std::uint64_t>(e.epoch)).field(e.train_loss).field(e.val_loss).field(e.val_acc);
        csv.end_row();
    }
    return csv.str();
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    write_file_bytes(path, history_csv(history));
}

} // namespace ftriage::zoo
