#include "ftriage/data/preprocess.hpp"

#include "ftriage/common/bytes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ftriage::data {

void to_json(nlohmann::json& j, const NormalizationStats& s) { j = {{"mean", s.mean}, {"std", s.std}}; }

void from_json(const nlohmann::json& j, NormalizationStats& s) {
    j.at("mean").get_to(s.mean);
    j.at("std").get_to(s.std);
    if (s.mean.size() != s.std.size() || s.mean.empty()) {
        throw FormatError("normalization stats need matching non-empty mean/std lists");
    }
}

NormalizationStats compute_stats(const Dataset& dataset) {
    dataset.validate();
    if (dataset.empty()) throw InputError("cannot compute normalization stats of an empty dataset");
    const std::size_t plane = dataset.height * dataset.width;
    const double count = static_cast<double>(dataset.size() * plane);
    NormalizationStats stats;
    stats.mean.assign(dataset.channels, 0.0);
    stats.std.assign(dataset.channels, 0.0);
    // two passes in a fixed order so recomputation is bit-identical
    for (std::size_t c = 0; c < dataset.channels; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const float* p = dataset.image(i).data() + c * plane;
            for (std::size_t k = 0; k < plane; ++k) sum += p[k] / 255.0;
        }
        const double mean = sum / count;
        double sq = 0.0;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const float* p = dataset.image(i).data() + c * plane;
            for (std::size_t k = 0; k < plane; ++k) {
                const double d = p[k] / 255.0 - mean;
                sq += d * d;
            }
        }
        stats.mean[c] = mean;
        stats.std[c] = std::sqrt(sq / count);
    }
    return stats;
}

void save_stats(const NormalizationStats& stats, const std::filesystem::path& path) {
    // max_digits10 output through nlohmann keeps doubles exact across the roundtrip
    write_file_bytes(path, nlohmann::json(stats).dump(2) + "\n");
}

NormalizationStats load_stats(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_file_bytes(path)).get<NormalizationStats>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

float normalize_value(float value, const NormalizationStats& stats, std::size_t channel) {
    return static_cast<float>((value / 255.0 - stats.mean[channel]) * (1.0 / std::max(stats.std[channel], kStdGuard)));
}

nn::Tensor make_batch(const Dataset& dataset, std::span<const std::size_t> indices, const NormalizationStats& stats) {
    if (stats.mean.size() != dataset.channels) {
        throw UsageError("normalization stats cover " + std::to_string(stats.mean.size()) + " channels, images have " +
                         std::to_string(dataset.channels));
    }
    const std::size_t plane = dataset.height * dataset.width;
    nn::Tensor batch({indices.size(), dataset.channels, dataset.height, dataset.width});
    std::vector<double> inv_std(dataset.channels);
    for (std::size_t c = 0; c < dataset.channels; ++c) inv_std[c] = 1.0 / std::max(stats.std[c], kStdGuard);
    float* out = batch.data();
    for (const std::size_t i : indices) {
        if (i >= dataset.size()) throw UsageError("batch index " + std::to_string(i) + " out of range");
        const float* src = dataset.image(i).data();
        for (std::size_t c = 0; c < dataset.channels; ++c) {
            for (std::size_t k = 0; k < plane; ++k) {
                *out++ = static_cast<float>((src[c * plane + k] / 255.0 - stats.mean[c]) * inv_std[c]);
            }
        }
    }
    return batch;
}

nn::Tensor make_batch(const Dataset& dataset, std::size_t first, std::size_t count, const NormalizationStats& stats) {
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), first);
    return make_batch(dataset, idx, stats);
}

std::vector<int> gather_labels(const Dataset& dataset, std::span<const std::size_t> indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (const std::size_t i : indices) out.push_back(dataset.labels.at(i));
    return out;
}

} // namespace ftriage::data
