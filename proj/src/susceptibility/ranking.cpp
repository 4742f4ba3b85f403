#include "ftriage/susceptibility/ranking.hpp"

#include "ftriage/common/bytes.hpp"
#include "ftriage/common/csv.hpp"
#include "ftriage/common/error.hpp"
#include "ftriage/common/parallel.hpp"
#include "ftriage/susceptibility/emd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ftriage::susceptibility {

std::string to_string(EmdMetric m) { return m == EmdMetric::marginal ? "marginal" : "exact"; }

EmdMetric emd_metric_from_string(const std::string& text) {
    if (text == "marginal") return EmdMetric::marginal;
    if (text == "exact") return EmdMetric::exact;
    throw ConfigError("unknown EMD metric '" + text + "' (expected marginal or exact)");
}

std::vector<double> filter_distances(std::span<const float> maps_a, std::span<const float> maps_b, std::size_t filters,
                                     std::size_t height, std::size_t width, EmdMetric metric, Capture capture) {
    const std::size_t plane = height * width;
    if (maps_a.size() != filters * plane || maps_b.size() != filters * plane) {
        throw UsageError("activation stacks do not match F x H x W");
    }
    if (metric == EmdMetric::exact && (height > kExactGridLimit || width > kExactGridLimit)) {
        // fail before any work rather than per filter
        emd_exact_2d({}, {}, height, width);
    }
    const bool shift = capture == Capture::pre_relu;
    std::vector<double> out(filters);
    for (std::size_t f = 0; f < filters; ++f) {
        const auto p = normalize_map(maps_a.subspan(f * plane, plane), shift);
        const auto q = normalize_map(maps_b.subspan(f * plane, plane), shift);
        out[f] = metric == EmdMetric::marginal ? emd_marginal(p, q, height, width) : emd_exact_2d(p, q, height, width);
    }
    return out;
}

DistanceMatrix compute_distance_matrix(const nn::Network& network, const data::Dataset& clean,
                                       const data::Dataset& distorted, const data::NormalizationStats& stats,
                                       const std::string& layer_id, const DistanceOptions& options) {
    if (clean.empty()) throw InputError("distance matrix needs at least one image pair");
    if (clean.size() != distorted.size()) {
        throw InputError("clean and distorted sets differ in size (" + std::to_string(clean.size()) + " vs " +
                         std::to_string(distorted.size()) + ")");
    }
    for (std::size_t i = 0; i < clean.size(); ++i) {
        if (clean.ids[i] != distorted.ids[i]) {
            throw InputError("pair " + std::to_string(i) + " is not aligned: ids " + std::to_string(clean.ids[i]) +
                             " and " + std::to_string(distorted.ids[i]));
        }
    }
    capture_index(network, layer_id, options.capture);  // validates the layer up front
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

    DistanceMatrix d;
    d.layer_id = layer_id;
    d.metric = to_string(options.metric);
    d.image_ids = clean.ids;

    for (std::size_t first = 0; first < clean.size(); first += batch) {
        const std::size_t count = std::min(batch, clean.size() - first);
        const auto a = extract_activations(network, data::make_batch(clean, first, count, stats), layer_id,
                                           options.capture);
        const auto b = extract_activations(network, data::make_batch(distorted, first, count, stats), layer_id,
                                           options.capture);
        const std::size_t f = a.dim(1), h = a.dim(2), w = a.dim(3);
        if (d.filters == 0) {
            d.filters = f;
            d.values.assign(clean.size() * f, 0.0);
        }
        const std::size_t stride = f * h * w;
        parallel_for(count, [&](std::size_t k) {
            const std::size_t i = first + k;
            try {
                const auto row = filter_distances(a.values().subspan(k * stride, stride),
                                                  b.values().subspan(k * stride, stride), f, h, w, options.metric,
                                                  options.capture);
                std::copy(row.begin(), row.end(), d.values.begin() + static_cast<std::ptrdiff_t>(i * f));
            } catch (const Error&) {
                rethrow_with_context("pair " + std::to_string(i) + " (image id " + std::to_string(clean.ids[i]) +
                                     "): ");
            }
        });
    }
    return d;
}

namespace {

// Sum of a column after sorting, so the mean does not depend on image order.
double order_free_mean(std::vector<double> column) {
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (double v : column) s += v;
    return column.empty() ? 0.0 : s / static_cast<double>(column.size());
}

std::vector<std::size_t> descending_order(std::span<const double> row) {
    std::vector<std::size_t> idx(row.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return row[x] > row[y]; });
    return idx;
}

void finalize_order(FilterRanking& r) {
    r.order.resize(r.scores.size());
    std::iota(r.order.begin(), r.order.end(), std::size_t{0});
    std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t x, std::size_t y) {
        return r.scores[x] > r.scores[y];
    });
}

} // namespace

FilterRanking borda_rank(const DistanceMatrix& d) {
    if (d.rows() == 0 || d.filters == 0) throw InputError("Borda ranking needs a non-empty distance matrix");
    FilterRanking r;
    r.layer_id = d.layer_id;
    r.scores.assign(d.filters, 0);
    const std::size_t positions = std::min(kBordaPositions, d.filters);
    for (std::size_t i = 0; i < d.rows(); ++i) {
        const auto order = descending_order(d.row(i));
        for (std::size_t pos = 0; pos < positions; ++pos) {
            r.scores[order[pos]] += static_cast<std::int64_t>(kBordaPositions - pos);
        }
    }
    r.mean_distance.resize(d.filters);
    std::vector<double> column(d.rows());
    for (std::size_t j = 0; j < d.filters; ++j) {
        for (std::size_t i = 0; i < d.rows(); ++i) column[i] = d.at(i, j);
        r.mean_distance[j] = order_free_mean(column);
    }
    finalize_order(r);
    return r;
}

FilterRanking rank_by_distance(const std::string& layer_id, std::span<const double> distances) {
    if (distances.empty()) throw InputError("cannot rank an empty distance vector");
    FilterRanking r;
    r.layer_id = layer_id;
    r.tie_break = "distance desc, index asc";
    r.order = descending_order(distances);
    r.mean_distance.assign(distances.begin(), distances.end());
    r.scores.assign(distances.size(), 0);
    for (std::size_t pos = 0; pos < std::min(kBordaPositions, distances.size()); ++pos) {
        r.scores[r.order[pos]] = static_cast<std::int64_t>(kBordaPositions - pos);
    }
    return r;
}

std::string to_string(SelectionMode m) {
    switch (m) {
    case SelectionMode::most: return "most";
    case SelectionMode::least: return "least";
    case SelectionMode::all: return "all";
    }
    return "all";
}

SelectionMode selection_mode_from_string(const std::string& text) {
    if (text == "most") return SelectionMode::most;
    if (text == "least") return SelectionMode::least;
    if (text == "all") return SelectionMode::all;
    throw ConfigError("unknown selection mode '" + text + "' (expected most, least or all)");
}

std::size_t selection_count(std::size_t filters, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("selection fraction must lie in (0,1]");
    // the small slack keeps 0.25*32 from landing on 7.999...
    const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(filters) + 1e-9));
    return std::min(filters, std::max<std::size_t>(1, n));
}

FilterSelection select_filters(const FilterRanking& ranking, SelectionMode mode, double fraction) {
    FilterSelection s;
    s.layer_id = ranking.layer_id;
    s.mode = mode;
    s.fraction = fraction;
    s.filters = ranking.filters();
    const std::size_t count = mode == SelectionMode::all ? s.filters : selection_count(s.filters, fraction);
    if (mode == SelectionMode::least) {
        s.selected.assign(ranking.order.end() - static_cast<std::ptrdiff_t>(count), ranking.order.end());
    } else {
        s.selected.assign(ranking.order.begin(), ranking.order.begin() + static_cast<std::ptrdiff_t>(count));
    }
    std::sort(s.selected.begin(), s.selected.end());
    return s;
}

std::string distance_matrix_csv(const DistanceMatrix& d) {
    std::vector<std::string> header{"image_id"};
    for (std::size_t j = 0; j < d.filters; ++j) header.push_back("f" + std::to_string(j));
    CsvWriter csv(std::move(header));
    for (std::size_t i = 0; i < d.rows(); ++i) {
        csv.field(d.image_ids[i]);
        for (double v : d.row(i)) csv.field(v);
        csv.end_row();
    }
    return csv.str();
}

std::string ranking_csv(const FilterRanking& r) {
    CsvWriter csv({"rank", "filter_index", "borda_score", "mean_distance"});
    for (std::size_t pos = 0; pos < r.order.size(); ++pos) {
        const std::size_t f = r.order[pos];
        csv.field(static_cast<std::uint64_t>(pos + 1))
            .field(static_cast<std::uint64_t>(f))
            .field(r.scores[f])
            .field(r.mean_distance[f]);
        csv.end_row();
    }
    return csv.str();
}

void write_distance_matrix_csv(const DistanceMatrix& d, const std::filesystem::path& path) {
    write_file_bytes(path, distance_matrix_csv(d));
}

void write_ranking_csv(const FilterRanking& r, const std::filesystem::path& path) {
    write_file_bytes(path, ranking_csv(r));
}

FilterRanking read_ranking_csv(const std::filesystem::path& path, const std::string& layer_id) {
    const auto table = read_csv(path);
    const std::size_t c_rank = table.column("rank"), c_filter = table.column("filter_index"),
                      c_score = table.column("borda_score"), c_mean = table.column("mean_distance");
    const std::size_t f = table.rows.size();
    if (f == 0) throw FormatError(path.string() + ": ranking is empty");
    FilterRanking r;
    r.layer_id = layer_id;
    r.order.assign(f, f);
    r.scores.assign(f, 0);
    r.mean_distance.assign(f, 0.0);
    std::vector<bool> seen(f, false);
    try {
        for (const auto& row : table.rows) {
            const std::size_t rank = std::stoul(row[c_rank]);
            const std::size_t filter = std::stoul(row[c_filter]);
            if (rank < 1 || rank > f || filter >= f || seen[filter] || r.order[rank - 1] != f) {
                throw FormatError("rank " + row[c_rank] + " / filter " + row[c_filter] + " is not a permutation entry");
            }
            seen[filter] = true;
            r.order[rank - 1] = filter;
            r.scores[filter] = std::stoll(row[c_score]);
            r.mean_distance[filter] = std::stod(row[c_mean]);
        }
    } catch (const std::logic_error& e) {
        throw FormatError(path.string() + ": malformed number in ranking (" + e.what() + ")");
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return r;
}

} // namespace ftriage::susceptibility
