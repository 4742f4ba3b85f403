#pragma once

#include "ftriage/data/preprocess.hpp"
#include "ftriage/susceptibility/activations.hpp"

#include <cstdint>
#include <filesystem>

namespace ftriage::susceptibility {

enum class EmdMetric { marginal, exact };

std::string to_string(EmdMetric m);
EmdMetric emd_metric_from_string(const std::string& text);

/// Per-filter EMD between two [F,H,W] map stacks (one value per filter).
std::vector<double> filter_distances(std::span<const float> maps_a, std::span<const float> maps_b, std::size_t filters,
                                     std::size_t height, std::size_t width, EmdMetric metric,
                                     Capture capture = Capture::post_relu);

/// N x F, row-major.
struct DistanceMatrix {
    std::string layer_id;
    std::string metric;
    std::vector<std::uint64_t> image_ids;
    std::size_t filters = 0;
    std::vector<double> values;

    std::size_t rows() const noexcept { return image_ids.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * filters + j]; }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * filters, filters}; }
};

struct DistanceOptions {
    EmdMetric metric = EmdMetric::marginal;
    Capture capture = Capture::post_relu;
    std::size_t batch_size = 64;
};

/// D[i][j] = EMD between the normalized maps of filter j for clean[i] and
/// distorted[i]. The datasets must be index-aligned.
DistanceMatrix compute_distance_matrix(const nn::Network& network, const data::Dataset& clean,
                                       const data::Dataset& distorted, const data::NormalizationStats& stats,
                                       const std::string& layer_id, const DistanceOptions& options = {});

inline constexpr std::size_t kBordaPositions = 10;

struct FilterRanking {
    std::string layer_id;
    std::vector<std::size_t> order;        // most to least susceptible
    std::vector<std::int64_t> scores;      // indexed by filter
    std::vector<double> mean_distance;     // indexed by filter
    std::string tie_break = "score desc, index asc";

    std::size_t filters() const noexcept { return order.size(); }
};

/// Truncated Borda count: each image ranks filters by distance (descending,
/// lower index first on ties) and awards 10, 9, ..., 1 points to its top ten.
/// Equal totals keep index order. mean_distance is reported, never consulted,
/// so rescaling a row cannot change the result.
FilterRanking borda_rank(const DistanceMatrix& d);

/// Single-voter ranking of a distance vector, distance descending then index.
FilterRanking rank_by_distance(const std::string& layer_id, std::span<const double> distances);

enum class SelectionMode { most, least, all };

std::string to_string(SelectionMode m);
SelectionMode selection_mode_from_string(const std::string& text);

struct FilterSelection {
    std::string layer_id;
    SelectionMode mode = SelectionMode::most;
    double fraction = 0.25;
    std::size_t filters = 0;
    std::vector<std::size_t> selected;  // ascending
};

/// max(1, floor(fraction*F)) filters from the top (most) or bottom (least);
/// every filter for mode all.
std::size_t selection_count(std::size_t filters, double fraction);
FilterSelection select_filters(const FilterRanking& ranking, SelectionMode mode, double fraction);

std::string distance_matrix_csv(const DistanceMatrix& d);
std::string ranking_csv(const FilterRanking& r);
void write_distance_matrix_csv(const DistanceMatrix& d, const std::filesystem::path& path);
void write_ranking_csv(const FilterRanking& r, const std::filesystem::path& path);
/// Reads a ranking CSV back (order, scores and mean distances).
FilterRanking read_ranking_csv(const std::filesystem::path& path, const std::string& layer_id);

} // namespace ftriage::susceptibility
