#include "ftriage/finetune/finetune.hpp"

#include "ftriage/common/csv.hpp"
#include "ftriage/common/error.hpp"
#include "ftriage/common/hash.hpp"
#include "ftriage/common/random.hpp"
#include "ftriage/susceptibility/activations.hpp"

#include <algorithm>
#include <set>

namespace ftriage::finetune {

namespace {

std::size_t out_channels(const nn::Layer<float>& layer) {
    return layer.params().front()->channels();
}

bool has_params(const nn::Layer<float>& layer) { return !layer.params().empty(); }

} // namespace

std::vector<std::string> classifier_layers(const nn::Network& network) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < network.size(); ++i) {
        if (network.layer(i).kind() == nn::LayerKind::dense) out.push_back(network.layer(i).name());
    }
    if (!out.empty()) return out;
    for (std::size_t i = network.size(); i-- > 0;) {
        if (network.layer(i).kind() != nn::LayerKind::conv2d) continue;
        out.push_back(network.layer(i).name());
        if (i + 1 < network.size() && network.layer(i + 1).kind() == nn::LayerKind::batchnorm) {
            out.push_back(network.layer(i + 1).name());
        }
        break;
    }
    return out;
}

std::vector<nn::TrainabilityMask> build_masks(const nn::Network& network, std::span<const FilterSelection> selections,
                                              bool freeze_classifier) {
    std::vector<std::vector<bool>> flags(network.size());
    for (std::size_t i = 0; i < network.size(); ++i) {
        if (has_params(network.layer(i))) flags[i].assign(out_channels(network.layer(i)), false);
    }

    std::set<std::string> seen;
    for (const auto& sel : selections) {
        const auto idx = network.find(sel.layer_id);
        if (!idx) throw ConfigError("fine-tune target '" + sel.layer_id + "' is not a layer of this network");
        const auto& layer = network.layer(*idx);
        if (layer.kind() != nn::LayerKind::conv2d) {
            throw ConfigError("fine-tune target '" + sel.layer_id + "' is not a convolution layer");
        }
        if (!seen.insert(sel.layer_id).second) {
            throw ConfigError("layer '" + sel.layer_id + "' is targeted more than once");
        }
        const std::size_t f = out_channels(layer);
        if (sel.filters != f) {
            throw ConfigError("selection for '" + sel.layer_id + "' covers " + std::to_string(sel.filters) +
                              " filters, layer has " + std::to_string(f));
        }
        for (const std::size_t c : sel.selected) {
            if (c >= f) {
                throw ConfigError("selected filter " + std::to_string(c) + " is out of range for '" + sel.layer_id +
                                  "'");
            }
            flags[*idx][c] = true;
            if (*idx + 1 < network.size() && network.layer(*idx + 1).kind() == nn::LayerKind::batchnorm) {
                flags[*idx + 1][c] = true;
            }
        }
    }

    if (!freeze_classifier) {
        for (const auto& name : classifier_layers(network)) {
            auto& f = flags[network.index_of(name)];
            std::fill(f.begin(), f.end(), true);
        }
    }

    std::vector<nn::TrainabilityMask> masks;
    for (std::size_t i = 0; i < network.size(); ++i) {
        if (has_params(network.layer(i))) masks.push_back({network.layer(i).name(), std::move(flags[i])});
    }
    return masks;
}

void apply_masks(nn::Network& network, std::span<const nn::TrainabilityMask> masks) {
    network.clear_masks();
    for (const auto& m : masks) {
        const auto idx = network.find(m.layer_id);
        if (!idx) throw ConfigError("mask names unknown layer '" + m.layer_id + "'");
        auto& layer = network.layer(*idx);
        for (auto* p : layer.params()) p->set_channel_mask(m.channel_flags);
        if (auto* bn = dynamic_cast<nn::BatchNormLayer<float>*>(&layer)) {
            bn->set_track_statistics(m.trainable_channels() > 0);
        }
    }
}

FinetuneResult finetune(const nn::Network& base, std::span<const nn::TrainabilityMask> masks,
                        const data::Dataset& noisy_train, const data::Dataset& noisy_val,
                        const data::NormalizationStats& stats, const FinetuneConfig& config) {
    FinetuneResult r{base, {}, 0};
    apply_masks(r.network, masks);
    r.trainable_params = r.network.trainable_parameter_count();
    r.history = zoo::train(r.network, noisy_train, noisy_val, stats, config.train);
    return r;
}

void CurveConfig::validate() const {
    if (layers.empty()) throw ConfigError("accuracy curve needs at least one target layer");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("selection fraction must lie in (0,1]");
    if (modes.empty()) throw ConfigError("accuracy curve needs at least one selection mode");
    if (train_sizes.empty()) throw ConfigError("accuracy curve needs at least one training-set size");
    for (std::size_t i = 0; i < train_sizes.size(); ++i) {
        if (train_sizes[i] == 0) throw ConfigError("training-set sizes must be positive");
        if (i > 0 && train_sizes[i] <= train_sizes[i - 1]) {
            throw ConfigError("training-set sizes must be strictly increasing");
        }
    }
    if (seeds.empty()) throw ConfigError("accuracy curve needs at least one seed");
    finetune.train.validate();
}

std::pair<data::Dataset, data::Dataset> draw_sample(const data::Dataset& pool, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigError("training-set size must be positive");
    const std::size_t n_val = (n + 3) / 4;
    if (pool.size() < n + n_val) {
        throw InputError("distorted training pool holds " + std::to_string(pool.size()) + " images, " +
                         std::to_string(n + n_val) + " needed for size " + std::to_string(n));
    }
    Rng rng(mix_seed(seed, n));
    const auto picked = sample_indices(pool.size(), n + n_val, rng);
    const std::span<const std::size_t> all(picked);
    return {pool.subset(all.first(n)), pool.subset(all.subspan(n))};
}

std::vector<CurveRow> accuracy_curve(const nn::Network& base, const std::map<std::string, FilterRanking>& rankings,
                                     const CurveConfig& config, const data::Dataset& noisy_pool,
                                     const data::Dataset& noisy_test, const data::Dataset& clean_test,
                                     const data::NormalizationStats& stats, const CellHook& on_cell) {
    config.validate();
    // fail on missing rankings and pool size before any training starts
    for (const auto& layer : config.layers) {
        if (!rankings.count(layer)) throw ConfigError("no ranking available for layer '" + layer + "'");
    }
    const std::size_t largest = config.train_sizes.back();
    if (noisy_pool.size() < largest + (largest + 3) / 4) draw_sample(noisy_pool, largest, 0);

    std::vector<std::vector<nn::TrainabilityMask>> mode_masks;
    for (const auto mode : config.modes) {
        std::vector<FilterSelection> sel;
        for (const auto& layer : config.layers) sel.push_back(select_filters(rankings.at(layer), mode, config.fraction));
        mode_masks.push_back(build_masks(base, sel, config.finetune.freeze_classifier));
    }

    std::vector<CurveRow> rows;
    for (const std::size_t n : config.train_sizes) {
        for (const std::uint64_t seed : config.seeds) {
            // every mode sees the same sample for a given (size, seed)
            const auto [train_set, val_set] = draw_sample(noisy_pool, n, seed);
            for (std::size_t m = 0; m < config.modes.size(); ++m) {
                FinetuneConfig fc = config.finetune;
                fc.train.seed = mix_seed(seed, n);
                const auto r = finetune(base, mode_masks[m], train_set, val_set, stats, fc);
                CurveRow row;
                row.mode = config.modes[m];
                row.train_size = n;
                row.seed = seed;
                row.noisy_test_acc = zoo::evaluate(r.network, noisy_test, stats).accuracy;
                row.clean_test_acc = zoo::evaluate(r.network, clean_test, stats).accuracy;
                row.trainable_params = r.trainable_params;
                row.epochs_run = r.history.epochs.size();
                if (on_cell) on_cell(row, r.network);
                rows.push_back(row);
            }
        }
    }
    return rows;
}

double median(std::vector<double> values) {
    if (values.empty()) throw UsageError("median of an empty list");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::string curve_csv(std::span<const CurveRow> rows) {
    CsvWriter csv({"mode", "train_size", "seed", "noisy_test_acc", "clean_test_acc", "trainable_params",
                   "epochs_run"});
    for (const auto& r : rows) {
        csv.field(to_string(r.mode))
            .field(static_cast<std::uint64_t>(r.train_size))
            .field(r.seed)
            .field(r.noisy_test_acc)
            .field(r.clean_test_acc)
            .field(static_cast<std::uint64_t>(r.trainable_params))
            .field(static_cast<std::uint64_t>(r.epochs_run));
        csv.end_row();
    }
    return csv.str();
}

std::string curve_summary_csv(std::span<const CurveRow> rows) {
    CsvWriter csv({"mode", "train_size", "seeds", "median_noisy_test_acc", "median_clean_test_acc"});
    // first-seen order of (mode, size) keeps the summary aligned with the raw rows
    std::vector<std::pair<SelectionMode, std::size_t>> keys;
    for (const auto& r : rows) {
        const std::pair key{r.mode, r.train_size};
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    for (const auto& [mode, n] : keys) {
        std::vector<double> noisy, clean;
        for (const auto& r : rows) {
            if (r.mode != mode || r.train_size != n) continue;
            noisy.push_back(r.noisy_test_acc);
            clean.push_back(r.clean_test_acc);
        }
        csv.field(to_string(mode))
            .field(static_cast<std::uint64_t>(n))
            .field(static_cast<std::uint64_t>(noisy.size()))
            .field(median(noisy))
            .field(median(clean));
        csv.end_row();
    }
    return csv.str();
}

DisparityHeatmap invariance_heatmap(const nn::Network& network, const data::Dataset& clean, std::size_t clean_index,
                                    const data::Dataset& distorted, std::size_t distorted_index,
                                    const data::NormalizationStats& stats, const std::string& layer_id) {
    if (clean_index >= clean.size() || distorted_index >= distorted.size()) {
        throw UsageError("heatmap image index out of range");
    }
    const std::size_t ci[] = {clean_index};
    const std::size_t di[] = {distorted_index};
    const auto a = susceptibility::extract_activations(network, data::make_batch(clean, ci, stats), layer_id);
    const auto b = susceptibility::extract_activations(network, data::make_batch(distorted, di, stats), layer_id);

    DisparityHeatmap h;
    h.layer_id = layer_id;
    h.filters = a.dim(1);
    h.height = a.dim(2);
    h.width = a.dim(3);
    const std::size_t plane = h.height * h.width;
    h.cells.assign(plane, 0);
    for (std::size_t f = 0; f < h.filters; ++f) {
        const float* pa = a.data() + f * plane;
        const float* pb = b.data() + f * plane;
        for (std::size_t p = 0; p < plane; ++p) h.cells[p] += (pa[p] > 0.0f) != (pb[p] > 0.0f) ? 1 : 0;
    }
    for (const auto c : h.cells) h.total += c;
    return h;
}

std::string heatmap_csv(const DisparityHeatmap& h) {
    std::vector<std::string> header;
    for (std::size_t x = 0; x < h.width; ++x) header.push_back("x" + std::to_string(x));
    CsvWriter csv(std::move(header));
    for (std::size_t y = 0; y < h.height; ++y) {
        for (std::size_t x = 0; x < h.width; ++x) csv.field(static_cast<std::uint64_t>(h.cells[y * h.width + x]));
        csv.end_row();
    }
    return csv.str();
}

} // namespace ftriage::finetune
