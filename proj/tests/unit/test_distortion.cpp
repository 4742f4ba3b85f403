#include "fixtures.hpp"

#include "ftriage/common/error.hpp"
#include "ftriage/distortion/distortion.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace ftriage;
using distortion::DistortionSpec;
using distortion::Kind;

namespace {

// reflect-101 written from its definition: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
std::size_t mirror(long i, long n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return static_cast<std::size_t>(i);
}

// Full 2D convolution with the outer-product kernel, no separability.
std::vector<double> direct_blur(const std::vector<float>& img, std::size_t c, std::size_t h, std::size_t w,
                                double sigma) {
    long size = std::lround(4.0 * sigma);
    if (size % 2 == 0) ++size;
    const long half = size / 2;
    std::vector<double> k1(static_cast<std::size_t>(size));
    for (long x = -half; x <= half; ++x) k1[static_cast<std::size_t>(x + half)] = std::exp(-(x * x) / (2 * sigma * sigma));
    const double s = std::accumulate(k1.begin(), k1.end(), 0.0);
    for (auto& v : k1) v /= s;
    std::vector<double> out(img.size());
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (long y = 0; y < static_cast<long>(h); ++y) {
            for (long x = 0; x < static_cast<long>(w); ++x) {
                double acc = 0.0;
                for (long dy = -half; dy <= half; ++dy) {
                    for (long dx = -half; dx <= half; ++dx) {
                        const double kv = k1[static_cast<std::size_t>(dy + half)] * k1[static_cast<std::size_t>(dx + half)];
                        acc += kv * img[(ch * h + mirror(y + dy, static_cast<long>(h))) * w +
                                        mirror(x + dx, static_cast<long>(w))];
                    }
                }
                out[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)] = std::clamp(acc, 0.0, 255.0);
            }
        }
    }
    return out;
}

} // namespace

TEST_CASE("blur kernel sizes, symmetry and unit sum") {
    CHECK(distortion::make_blur_kernel(0.0).size() == 1);
    CHECK(distortion::make_blur_kernel(0.25).size() == 1);   // 4 sigma = 1
    CHECK(distortion::make_blur_kernel(1.25).size() == 5);
    CHECK(distortion::make_blur_kernel(2.25).size() == 9);
    CHECK(distortion::make_blur_kernel(1.0).size() == 5);    // 4 -> bumped to odd
    for (const double sigma : {0.5, 1.25, 2.0, 2.25, 3.0}) {
        const auto k = distortion::make_blur_kernel(sigma);
        CHECK(std::accumulate(k.begin(), k.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
        for (std::size_t i = 0; i < k.size(); ++i) CHECK(k[i] == k[k.size() - 1 - i]);
        CHECK(std::max_element(k.begin(), k.end()) - k.begin() == static_cast<std::ptrdiff_t>(k.size() / 2));
    }
    CHECK_THROWS_AS(distortion::make_blur_kernel(-1.0), ConfigError);
}

TEST_CASE("separable blur matches direct 2D convolution with reflect-101 borders") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(0.0f, 255.0f);
    for (const double sigma : {0.5, 1.25, 2.25}) {
        for (const auto [h, w] : {std::pair<std::size_t, std::size_t>{32, 32}, {7, 11}, {5, 5}}) {
            std::vector<float> img(2 * h * w);
            for (auto& v : img) v = u(rng);
            const auto expected = direct_blur(img, 2, h, w, sigma);
            auto got = img;
            distortion::gaussian_blur(got, 2, h, w, sigma);
            double worst = 0.0;
            for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(got[i] - expected[i]));
            CHECK(worst < 1e-3);
        }
    }
}

TEST_CASE("blur properties: constant image fixed, range never grows") {
    std::vector<float> flat(3 * 8 * 8, 77.0f);
    auto b = flat;
    distortion::gaussian_blur(b, 3, 8, 8, 2.0);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(b[i] == doctest::Approx(77.0f).epsilon(1e-6));

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> u(30.0f, 200.0f);
    std::vector<float> img(3 * 16 * 16);
    for (auto& v : img) v = u(rng);
    auto blurred = img;
    distortion::gaussian_blur(blurred, 3, 16, 16, 1.25);
    const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
    const auto [blo, bhi] = std::minmax_element(blurred.begin(), blurred.end());
    CHECK(*blo >= *lo - 1e-4f);
    CHECK(*bhi <= *hi + 1e-4f);
    CHECK(*bhi - *blo < *hi - *lo);

    auto same = img;
    distortion::gaussian_blur(same, 3, 16, 16, 0.0);
    CHECK(same == img);
}

TEST_CASE("awgn: zero sigma identity, clamping and noise statistics") {
    auto d = fixture::synthetic(4, 10, 2);
    const auto before = d.pixels;
    Rng rng(1);
    distortion::awgn(d.image(0), 0.0, rng);
    CHECK(d.pixels == before);

    std::vector<float> gray(200000, 128.0f);
    Rng r2(42);
    distortion::awgn(gray, 15.0, r2);
    double mean = 0.0, sq = 0.0;
    for (float v : gray) mean += v;
    mean /= static_cast<double>(gray.size());
    for (float v : gray) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(gray.size()));
    CHECK(mean == doctest::Approx(128.0).epsilon(0.002));
    CHECK(sd == doctest::Approx(15.0).epsilon(0.01));

    std::vector<float> edge(1000, 250.0f);
    Rng r3(3);
    distortion::awgn(edge, 25.0, r3);
    CHECK(*std::max_element(edge.begin(), edge.end()) == 255.0f);
    CHECK(*std::min_element(edge.begin(), edge.end()) >= 0.0f);
}

TEST_CASE("distort_dataset: identity, determinism and order independence") {
    const auto d = fixture::synthetic(12, 10, 4);
    const auto same = distortion::distort_dataset(d, {Kind::identity, 0.0, 1});
    CHECK(same.pixels == d.pixels);
    CHECK(distortion::distort_dataset(d, {Kind::awgn, 0.0, 1}).pixels == d.pixels);
    CHECK(distortion::distort_dataset(d, {Kind::blur, 0.0, 1}).pixels == d.pixels);

    const DistortionSpec spec{Kind::awgn, 15.0, 9};
    const auto a = distortion::distort_dataset(d, spec);
    const auto b = distortion::distort_dataset(d, spec);
    CHECK(a.pixels == b.pixels);
    CHECK(a.pixels != d.pixels);
    CHECK(a.labels == d.labels);
    CHECK(a.ids == d.ids);
    CHECK(a.provenance["distortion"]["kind"] == "awgn");

    // permuted input: each image gets the same noise as before
    std::vector<std::size_t> perm(d.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[2], perm[7]);
    const auto p = distortion::distort_dataset(d.subset(perm), spec);
    for (std::size_t k = 0; k < perm.size(); ++k) {
        const auto x = p.image(k);
        const auto y = a.image(perm[k]);
        CHECK(std::equal(x.begin(), x.end(), y.begin()));
    }
    const auto other = distortion::distort_dataset(d, {Kind::awgn, 15.0, 10});
    CHECK(other.pixels != a.pixels);
    CHECK_THROWS_AS(distortion::distort_dataset(d, {Kind::awgn, -1.0, 0}), ConfigError);
}

TEST_CASE("distortion spec labels and json") {
    CHECK(DistortionSpec{Kind::awgn, 15.0, 0}.label() == "awgn-15");
    CHECK(DistortionSpec{Kind::blur, 1.25, 0}.label() == "blur-1.25");
    CHECK(DistortionSpec{}.label() == "identity");
    const DistortionSpec s{Kind::blur, 2.25, 77};
    nlohmann::json j = s;
    CHECK(j.get<DistortionSpec>() == s);
    CHECK_THROWS_AS(distortion::kind_from_string("jpeg"), ConfigError);
}
