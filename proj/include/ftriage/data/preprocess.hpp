#pragma once

#include "ftriage/data/dataset.hpp"
#include "ftriage/nn/tensor.hpp"

#include <span>

namespace ftriage::data {

inline constexpr double kStdGuard = 1e-8;

/// Per-channel mean and population std of value/255.
struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> std;

    bool operator==(const NormalizationStats&) const = default;
};

void to_json(nlohmann::json& j, const NormalizationStats& s);
void from_json(const nlohmann::json& j, NormalizationStats& s);

NormalizationStats compute_stats(const Dataset& dataset);

void save_stats(const NormalizationStats& stats, const std::filesystem::path& path);
NormalizationStats load_stats(const std::filesystem::path& path);

/// (value/255 - mean_c) / max(std_c, 1e-8)
float normalize_value(float value, const NormalizationStats& stats, std::size_t channel);

/// Normalized [B,C,H,W] batch of the given images.
nn::Tensor make_batch(const Dataset& dataset, std::span<const std::size_t> indices, const NormalizationStats& stats);
/// Whole dataset (or the range [first, first+count)) as one batch.
nn::Tensor make_batch(const Dataset& dataset, std::size_t first, std::size_t count, const NormalizationStats& stats);

std::vector<int> gather_labels(const Dataset& dataset, std::span<const std::size_t> indices);

} // namespace ftriage::data
