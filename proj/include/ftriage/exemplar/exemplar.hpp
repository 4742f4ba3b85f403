#pragma once

#include "ftriage/susceptibility/ranking.hpp"

#include <optional>

namespace ftriage::exemplar {

enum class FeatureKind { pixels, collapsed_activations };
enum class MetricKind { euclidean, hamming };

std::string to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& text);  // accepts "ftm" as an alias
std::string to_string(MetricKind m);
MetricKind metric_kind_from_string(const std::string& text);

struct FeatureRep {
    FeatureKind kind = FeatureKind::pixels;
    std::string layer_id;   // collapsed_activations only
    bool binarize = false;  // collapsed_activations only

    void validate() const;
};

/// Row-major feature vectors. Binarized features are packed 64 per word.
struct Features {
    std::size_t count = 0;
    std::size_t dim = 0;
    bool binary = false;
    std::vector<float> values;        // count*dim when !binary
    std::vector<std::uint64_t> bits;  // count*words() when binary

    std::size_t words() const noexcept { return (dim + 63) / 64; }
};

/// 1 iff value > 0.
std::vector<std::uint8_t> binarize(std::span<const float> values);

/// pixels: raw 0-255 values, C*H*W per image. collapsed_activations: the
/// flattened post-ReLU maps of rep.layer_id (network required).
Features featurize(const data::Dataset& dataset, const FeatureRep& rep, const nn::Network* network,
                   const data::NormalizationStats* stats, std::span<const std::size_t> indices = {});

/// Hamming needs binary features; Euclidean works on either.
void check_metric(const FeatureRep& rep, MetricKind metric);

struct MedoidResult {
    std::size_t index = 0;           // into the feature rows
    double total_distance = 0.0;     // sum of distances from the medoid
    std::vector<double> totals;      // per candidate
};

/// Exact k=1 medoid: argmin_i sum_j d(x_i, x_j), lowest index on ties.
MedoidResult medoid(const Features& features, MetricKind metric);

struct Exemplar {
    std::string tag;                 // clean | noisy
    std::size_t index = 0;           // position in the dataset
    std::uint64_t image_id = 0;
    double total_distance = 0.0;
    std::size_t candidates = 0;      // points the medoid was chosen from
    bool subsampled = false;
};

struct ExemplarOptions {
    FeatureRep rep;
    MetricKind metric = MetricKind::euclidean;
    std::size_t max_points = 1000;   // seeded subsample above this
    std::uint64_t seed = 0;
};

Exemplar find_exemplar(const data::Dataset& dataset, const std::string& tag, const ExemplarOptions& options,
                       const nn::Network* network, const data::NormalizationStats* stats);

struct NonAssocOptions {
    ExemplarOptions exemplar;
    susceptibility::EmdMetric emd = susceptibility::EmdMetric::marginal;
    susceptibility::Capture capture = susceptibility::Capture::post_relu;
};

struct NonAssocResult {
    susceptibility::FilterRanking ranking;
    Exemplar clean;
    Exemplar noisy;
    std::vector<double> distances;   // per filter, between the two exemplars
};

/// Medoid of each set, then per-filter EMD between the two exemplars' maps at
/// layer_id, sorted descending.
NonAssocResult nonassoc_rank(const nn::Network& network, const data::Dataset& clean_set,
                             const data::Dataset& noisy_set, const data::NormalizationStats& stats,
                             const std::string& layer_id, const NonAssocOptions& options);

/// |top-k(a) intersect top-k(b)|, order inside the top-k ignored.
std::size_t ranking_overlap(const susceptibility::FilterRanking& a, const susceptibility::FilterRanking& b,
                            std::size_t k);

std::string exemplar_report_json(const NonAssocResult& result, const NonAssocOptions& options);

} // namespace ftriage::exemplar
