#include "fixtures.hpp"

#include "ftriage/common/error.hpp"
#include "ftriage/distortion/distortion.hpp"
#include "ftriage/exemplar/exemplar.hpp"
#include "ftriage/zoo/presets.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace ftriage;
using namespace ftriage::exemplar;

namespace {

Features dense_features(std::size_t dim, const std::vector<float>& values) {
    Features f;
    f.dim = dim;
    f.count = values.size() / dim;
    f.values = values;
    return f;
}

Features bit_features(const std::vector<std::vector<int>>& rows) {
    Features f;
    f.binary = true;
    f.count = rows.size();
    f.dim = rows.front().size();
    f.bits.assign(f.count * f.words(), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t e = 0; e < f.dim; ++e) {
            if (rows[i][e]) f.bits[i * f.words() + e / 64] |= std::uint64_t{1} << (e % 64);
        }
    }
    return f;
}

// O(n^2 d) medoid written straight from the definition.
std::size_t brute_medoid(const std::vector<std::vector<double>>& pts) {
    std::size_t best = 0;
    double best_total = 1e300;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double total = 0.0;
        for (const auto& q : pts) {
            double s = 0.0;
            for (std::size_t k = 0; k < q.size(); ++k) s += (pts[i][k] - q[k]) * (pts[i][k] - q[k]);
            total += std::sqrt(s);
        }
        if (total < best_total - 1e-9) {
            best_total = total;
            best = i;
        }
    }
    return best;
}

} // namespace

TEST_CASE("medoid of {0, 1, 10} is 1") {
    const auto m = medoid(dense_features(1, {0.0f, 1.0f, 10.0f}), MetricKind::euclidean);
    CHECK(m.index == 1);
    CHECK(m.total_distance == doctest::Approx(10.0));
    CHECK(m.totals == std::vector<double>{11.0, 10.0, 19.0});
}

TEST_CASE("medoid ties pick the lowest index") {
    CHECK(medoid(dense_features(1, {0.0f, 2.0f}), MetricKind::euclidean).index == 0);
    CHECK(medoid(dense_features(2, {5, 5, 1, 1, 5, 5, 9, 9}), MetricKind::euclidean).index == 0);
    CHECK(medoid(dense_features(1, {7.0f}), MetricKind::euclidean).index == 0);
    CHECK_THROWS_AS(medoid(Features{}, MetricKind::euclidean), InputError);
}

TEST_CASE("medoid agrees with a brute-force oracle") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 2 + trial * 3, d = 1 + trial % 6;
        std::vector<std::vector<double>> pts(n, std::vector<double>(d));
        std::vector<float> flat;
        for (auto& p : pts) {
            for (auto& v : p) {
                v = static_cast<float>(g(rng));
                flat.push_back(static_cast<float>(v));
            }
        }
        CHECK(medoid(dense_features(d, flat), MetricKind::euclidean).index == brute_medoid(pts));
    }
}

TEST_CASE("medoid is permutation equivariant") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    const std::size_t n = 30, d = 4;
    std::vector<float> flat(n * d);
    for (auto& v : flat) v = u(rng);
    const auto base = medoid(dense_features(d, flat), MetricKind::euclidean);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (int t = 0; t < 5; ++t) {
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<float> shuffled;
        for (std::size_t i : perm) shuffled.insert(shuffled.end(), flat.begin() + i * d, flat.begin() + (i + 1) * d);
        const auto m = medoid(dense_features(d, shuffled), MetricKind::euclidean);
        CHECK(perm[m.index] == base.index);
        CHECK(m.total_distance == base.total_distance);
    }
}

TEST_CASE("Hamming medoid on packed bits") {
    const auto f = bit_features({{1, 1, 0, 0}, {1, 0, 0, 0}, {0, 0, 1, 1}, {1, 1, 1, 0}});
    const auto h = medoid(f, MetricKind::hamming);
    // distances: 0-1:1 0-2:4 0-3:1 1-2:3 1-3:2 2-3:3
    CHECK(h.totals == std::vector<double>{6.0, 6.0, 10.0, 6.0});
    CHECK(h.index == 0);
    const auto e = medoid(f, MetricKind::euclidean);
    CHECK(e.totals[2] == doctest::Approx(2.0 + std::sqrt(3.0) * 2.0));

    std::vector<std::vector<int>> wide(3, std::vector<int>(130, 0));
    wide[1][129] = 1;
    wide[2][0] = wide[2][64] = wide[2][129] = 1;
    const auto w = medoid(bit_features(wide), MetricKind::hamming);
    CHECK(w.totals == std::vector<double>{4.0, 3.0, 5.0});
    CHECK(w.index == 1);

    CHECK(binarize(std::vector<float>{-1.0f, 0.0f, 0.5f}) == std::vector<std::uint8_t>{0, 0, 1});
    CHECK_THROWS_AS(medoid(dense_features(1, {1, 2}), MetricKind::hamming), ConfigError);
}

TEST_CASE("feature and metric configuration errors") {
    FeatureRep pixels;
    CHECK_THROWS_AS(check_metric(pixels, MetricKind::hamming), ConfigError);
    FeatureRep bad_bin{FeatureKind::pixels, "", true};
    CHECK_THROWS_AS(bad_bin.validate(), ConfigError);
    FeatureRep no_layer{FeatureKind::collapsed_activations, "", false};
    CHECK_THROWS_AS(no_layer.validate(), ConfigError);
    FeatureRep real_ftm{FeatureKind::collapsed_activations, "conv1", false};
    CHECK_THROWS_AS(check_metric(real_ftm, MetricKind::hamming), ConfigError);
    FeatureRep bin_ftm{FeatureKind::collapsed_activations, "conv1", true};
    CHECK_NOTHROW(check_metric(bin_ftm, MetricKind::hamming));
    CHECK(feature_kind_from_string("ftm") == FeatureKind::collapsed_activations);
    CHECK_THROWS_AS(feature_kind_from_string("hog"), ConfigError);
    CHECK_THROWS_AS(metric_kind_from_string("cosine"), ConfigError);

    const auto d = fixture::synthetic(3, 10, 1);
    CHECK_THROWS_AS(featurize(d, bin_ftm, nullptr, nullptr), UsageError);
}

TEST_CASE("exemplar search: subsampling and determinism") {
    const auto d = fixture::synthetic(40, 10, 6);
    ExemplarOptions opt;
    const auto full = find_exemplar(d, "clean", opt, nullptr, nullptr);
    CHECK_FALSE(full.subsampled);
    CHECK(full.candidates == 40);
    CHECK(full.image_id == d.ids[full.index]);

    opt.max_points = 12;
    opt.seed = 5;
    const auto a = find_exemplar(d, "clean", opt, nullptr, nullptr);
    const auto b = find_exemplar(d, "clean", opt, nullptr, nullptr);
    CHECK(a.subsampled);
    CHECK(a.candidates == 12);
    CHECK(a.index == b.index);
    CHECK(a.total_distance == b.total_distance);

    opt.max_points = 0;
    CHECK_THROWS_AS(find_exemplar(d, "clean", opt, nullptr, nullptr), ConfigError);
    CHECK_THROWS_AS(find_exemplar(data::Dataset{}, "clean", ExemplarOptions{}, nullptr, nullptr), InputError);
}

TEST_CASE("non-associative ranking") {
    const auto net = zoo::build_model(zoo::cifar10_small(10), 2);
    const auto clean = fixture::synthetic(20, 10, 3);
    const auto noisy = distortion::distort_dataset(fixture::synthetic(20, 10, 4), {distortion::Kind::awgn, 20.0, 1});
    const auto stats = data::compute_stats(clean);
    NonAssocOptions opt;
    const auto r = nonassoc_rank(net, clean, noisy, stats, "conv2", opt);
    CHECK(r.ranking.filters() == 16);
    CHECK(r.distances.size() == 16);
    for (std::size_t k = 1; k < 16; ++k) CHECK(r.distances[r.ranking.order[k - 1]] >= r.distances[r.ranking.order[k]]);

    opt.exemplar.rep = {FeatureKind::collapsed_activations, "conv1", true};
    opt.exemplar.metric = MetricKind::hamming;
    const auto h = nonassoc_rank(net, clean, noisy, stats, "conv1", opt);
    CHECK(h.ranking.filters() == 32);
    const auto again = nonassoc_rank(net, clean, noisy, stats, "conv1", opt);
    CHECK(again.ranking.order == h.ranking.order);
    CHECK(again.clean.index == h.clean.index);

    const auto json = nlohmann::json::parse(exemplar_report_json(h, opt));
    CHECK(json["metric"] == "hamming");
    CHECK(json["clean"]["image_id"] == h.clean.image_id);

    CHECK_THROWS_AS(nonassoc_rank(net, clean, noisy, stats, "fc1", opt), UsageError);
}

TEST_CASE("ranking overlap") {
    const auto a = susceptibility::rank_by_distance("c", std::vector<double>{5, 4, 3, 2, 1, 0});
    const auto b = susceptibility::rank_by_distance("c", std::vector<double>{0, 4, 5, 1, 2, 3});
    CHECK(ranking_overlap(a, a, 3) == 3);
    CHECK(ranking_overlap(a, b, 3) == 2);  // {0,1,2} vs {2,1,5}
    CHECK(ranking_overlap(a, b, 6) == 6);
    CHECK(ranking_overlap(a, b, 0) == 0);
    CHECK(ranking_overlap(a, b, 2) == ranking_overlap(b, a, 2));
    CHECK_THROWS_AS(ranking_overlap(a, b, 7), UsageError);
    const auto other = susceptibility::rank_by_distance("d", std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(ranking_overlap(a, other, 2), UsageError);
}
