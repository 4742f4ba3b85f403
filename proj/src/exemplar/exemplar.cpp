#include "ftriage/exemplar/exemplar.hpp"

#include "ftriage/common/error.hpp"
#include "ftriage/common/parallel.hpp"
#include "ftriage/common/random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace ftriage::exemplar {

std::string to_string(FeatureKind k) { return k == FeatureKind::pixels ? "pixels" : "ftm"; }

FeatureKind feature_kind_from_string(const std::string& text) {
    if (text == "pixels") return FeatureKind::pixels;
    if (text == "ftm" || text == "collapsed-activations") return FeatureKind::collapsed_activations;
    throw ConfigError("unknown feature representation '" + text + "' (expected pixels or ftm)");
}

std::string to_string(MetricKind m) { return m == MetricKind::euclidean ? "euclidean" : "hamming"; }

MetricKind metric_kind_from_string(const std::string& text) {
    if (text == "euclidean") return MetricKind::euclidean;
    if (text == "hamming") return MetricKind::hamming;
    throw ConfigError("unknown exemplar metric '" + text + "' (expected euclidean or hamming)");
}

void FeatureRep::validate() const {
    if (kind == FeatureKind::pixels && binarize) {
        throw ConfigError("binarization is only defined for collapsed activations");
    }
    if (kind == FeatureKind::collapsed_activations && layer_id.empty()) {
        throw ConfigError("collapsed-activation features need a layer id");
    }
}

void check_metric(const FeatureRep& rep, MetricKind metric) {
    rep.validate();
    if (metric == MetricKind::hamming && rep.kind == FeatureKind::pixels) {
        throw ConfigError("Hamming distance is not available for pixel features");
    }
    if (metric == MetricKind::hamming && !rep.binarize) {
        throw ConfigError("Hamming distance requires binarized features");
    }
}

std::vector<std::uint8_t> binarize(std::span<const float> values) {
    std::vector<std::uint8_t> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] > 0.0f ? 1 : 0;
    return out;
}

Features featurize(const data::Dataset& dataset, const FeatureRep& rep, const nn::Network* network,
                   const data::NormalizationStats* stats, std::span<const std::size_t> indices) {
    rep.validate();
    std::vector<std::size_t> all;
    if (indices.empty()) {
        all.resize(dataset.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        indices = all;
    }
    Features f;
    f.count = indices.size();
    f.binary = rep.binarize;

    if (rep.kind == FeatureKind::pixels) {
        f.dim = dataset.image_size();
        f.values.reserve(f.count * f.dim);
        for (const std::size_t i : indices) {
            const auto img = dataset.image(i);
            f.values.insert(f.values.end(), img.begin(), img.end());
        }
        return f;
    }

    if (network == nullptr || stats == nullptr) {
        throw UsageError("collapsed-activation features need a network and normalization stats");
    }
    constexpr std::size_t kBatch = 64;
    for (std::size_t first = 0; first < f.count; first += kBatch) {
        const std::size_t count = std::min(kBatch, f.count - first);
        const auto maps = susceptibility::extract_activations(
            *network, data::make_batch(dataset, indices.subspan(first, count), *stats), rep.layer_id);
        const std::size_t dim = maps.numel() / count;
        if (f.dim == 0) {
            f.dim = dim;
            if (f.binary) {
                f.bits.assign(f.count * f.words(), 0);
            } else {
                f.values.reserve(f.count * f.dim);
            }
        }
        if (!f.binary) {
            f.values.insert(f.values.end(), maps.values().begin(), maps.values().end());
            continue;
        }
        for (std::size_t k = 0; k < count; ++k) {
            std::uint64_t* row = f.bits.data() + (first + k) * f.words();
            const float* src = maps.data() + k * dim;
            for (std::size_t e = 0; e < dim; ++e) {
                if (src[e] > 0.0f) row[e / 64] |= std::uint64_t{1} << (e % 64);
            }
        }
    }
    return f;
}

MedoidResult medoid(const Features& features, MetricKind metric) {
    if (features.count == 0) throw InputError("medoid of an empty set is undefined");
    if (metric == MetricKind::hamming && !features.binary) throw ConfigError("Hamming distance requires binary features");
    const std::size_t n = features.count;

    // upper triangle first; row sums happen serially afterwards
    std::vector<double> dist(n * n, 0.0);
    if (features.binary) {
        const std::size_t words = features.words();
        parallel_for(n, [&](std::size_t i) {
            const std::uint64_t* a = features.bits.data() + i * words;
            for (std::size_t j = i + 1; j < n; ++j) {
                const std::uint64_t* b = features.bits.data() + j * words;
                std::uint64_t bits = 0;
                for (std::size_t w = 0; w < words; ++w) bits += static_cast<std::uint64_t>(std::popcount(a[w] ^ b[w]));
                // Euclidean distance between 0/1 vectors is the root of the Hamming count
                dist[i * n + j] = metric == MetricKind::hamming ? static_cast<double>(bits)
                                                                : std::sqrt(static_cast<double>(bits));
            }
        });
    } else {
        const auto dim = static_cast<Eigen::Index>(features.dim);
        parallel_for(n, [&](std::size_t i) {
            const Eigen::Map<const Eigen::VectorXf> a(features.values.data() + i * features.dim, dim);
            const Eigen::VectorXd ad = a.cast<double>();
            for (std::size_t j = i + 1; j < n; ++j) {
                const Eigen::Map<const Eigen::VectorXf> b(features.values.data() + j * features.dim, dim);
                dist[i * n + j] = std::sqrt((ad - b.cast<double>()).squaredNorm());
            }
        });
    }
    MedoidResult r;
    r.totals.assign(n, 0.0);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) row[j] = i < j ? dist[i * n + j] : dist[j * n + i];
        // summing in sorted order keeps totals independent of dataset order
        std::sort(row.begin(), row.end());
        double total = 0.0;
        for (double v : row) total += v;
        r.totals[i] = total;
    }
    r.index = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (r.totals[i] < r.totals[r.index]) r.index = i;
    }
    r.total_distance = r.totals[r.index];
    return r;
}

Exemplar find_exemplar(const data::Dataset& dataset, const std::string& tag, const ExemplarOptions& options,
                       const nn::Network* network, const data::NormalizationStats* stats) {
    check_metric(options.rep, options.metric);
    if (dataset.empty()) throw InputError("cannot pick an exemplar from the empty " + tag + " set");
    if (options.max_points == 0) throw ConfigError("exemplar max_points must be positive");
    std::vector<std::size_t> candidates;
    Exemplar ex;
    ex.tag = tag;
    if (dataset.size() > options.max_points) {
        Rng rng(options.seed);
        candidates = sample_indices(dataset.size(), options.max_points, rng);
        std::sort(candidates.begin(), candidates.end());
        ex.subsampled = true;
    } else {
        candidates.resize(dataset.size());
        std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    }
    const auto features = featurize(dataset, options.rep, network, stats, candidates);
    const auto m = medoid(features, options.metric);
    ex.index = candidates[m.index];
    ex.image_id = dataset.ids[ex.index];
    ex.total_distance = m.total_distance;
    ex.candidates = candidates.size();
    return ex;
}

NonAssocResult nonassoc_rank(const nn::Network& network, const data::Dataset& clean_set,
                             const data::Dataset& noisy_set, const data::NormalizationStats& stats,
                             const std::string& layer_id, const NonAssocOptions& options) {
    susceptibility::capture_index(network, layer_id, options.capture);
    NonAssocResult out;
    out.clean = find_exemplar(clean_set, "clean", options.exemplar, &network, &stats);
    out.noisy = find_exemplar(noisy_set, "noisy", options.exemplar, &network, &stats);

    const std::size_t ci[] = {out.clean.index};
    const std::size_t ni[] = {out.noisy.index};
    const auto a = susceptibility::extract_activations(network, data::make_batch(clean_set, ci, stats), layer_id,
                                                       options.capture);
    const auto b = susceptibility::extract_activations(network, data::make_batch(noisy_set, ni, stats), layer_id,
                                                       options.capture);
    out.distances = susceptibility::filter_distances(a.values(), b.values(), a.dim(1), a.dim(2), a.dim(3), options.emd,
                                                     options.capture);
    out.ranking = susceptibility::rank_by_distance(layer_id, out.distances);
    return out;
}

std::size_t ranking_overlap(const susceptibility::FilterRanking& a, const susceptibility::FilterRanking& b,
                            std::size_t k) {
    if (a.layer_id != b.layer_id) {
        throw UsageError("cannot compare rankings of layers '" + a.layer_id + "' and '" + b.layer_id + "'");
    }
    if (a.filters() != b.filters()) throw UsageError("rankings cover different filter counts");
    if (k > a.filters()) throw UsageError("overlap size k exceeds the filter count");
    std::vector<bool> in_a(a.filters(), false);
    for (std::size_t i = 0; i < k; ++i) in_a[a.order[i]] = true;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) hits += in_a[b.order[i]] ? 1 : 0;
    return hits;
}

std::string exemplar_report_json(const NonAssocResult& result, const NonAssocOptions& options) {
    auto ex = [](const Exemplar& e) {
        return nlohmann::json{{"tag", e.tag},
                              {"index", e.index},
                              {"image_id", e.image_id},
                              {"total_distance", e.total_distance},
                              {"candidates", e.candidates},
                              {"subsampled", e.subsampled}};
    };
    nlohmann::json j = {
        {"layer", result.ranking.layer_id},
        {"features", to_string(options.exemplar.rep.kind)},
        {"binarize", options.exemplar.rep.binarize},
        {"metric", to_string(options.exemplar.metric)},
        {"emd_metric", susceptibility::to_string(options.emd)},
        {"max_points", options.exemplar.max_points},
        {"seed", options.exemplar.seed},
        {"clean", ex(result.clean)},
        {"noisy", ex(result.noisy)},
        {"distances", result.distances},
    };
    return j.dump(2) + "\n";
}

} // namespace ftriage::exemplar
