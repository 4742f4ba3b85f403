#include "ftriage/distortion/distortion.hpp"

#include "ftriage/common/error.hpp"
#include "ftriage/common/hash.hpp"
#include "ftriage/common/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ftriage::distortion {

namespace {

float clamp_pixel(double v) { return static_cast<float>(std::clamp(v, 0.0, 255.0)); }

// reflect-101: -1 -> 1, n -> n-2
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    if (m == 1) return 0;
    const std::ptrdiff_t period = 2 * (m - 1);
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < m ? i : period - i);
}

} // namespace

std::string to_string(Kind kind) {
    switch (kind) {
    case Kind::identity: return "identity";
    case Kind::awgn: return "awgn";
    case Kind::blur: return "blur";
    }
    return "identity";
}

Kind kind_from_string(const std::string& text) {
    if (text == "identity") return Kind::identity;
    if (text == "awgn") return Kind::awgn;
    if (text == "blur") return Kind::blur;
    throw ConfigError("unknown distortion '" + text + "' (expected awgn, blur or identity)");
}

void DistortionSpec::validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("distortion sigma must be finite and >= 0");
}

std::string DistortionSpec::label() const {
    if (kind == Kind::identity) return "identity";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s-%g", to_string(kind).c_str(), sigma);
    return buf;
}

void to_json(nlohmann::json& j, const DistortionSpec& s) {
    j = {{"kind", to_string(s.kind)}, {"sigma", s.sigma}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, DistortionSpec& s) {
    s.kind = kind_from_string(j.at("kind").get<std::string>());
    s.sigma = j.value("sigma", 0.0);
    s.seed = j.value("seed", std::uint64_t{0});
    s.validate();
}

void awgn(std::span<float> image, double sigma, Rng& rng) {
    if (!(sigma >= 0.0)) throw ConfigError("awgn sigma must be >= 0");
    if (sigma == 0.0) return;
    for (auto& v : image) v = clamp_pixel(v + sigma * standard_normal(rng));
}

std::vector<double> make_blur_kernel(double sigma) {
    if (!(sigma >= 0.0)) throw ConfigError("blur sigma must be >= 0");
    auto size = static_cast<std::size_t>(std::llround(4.0 * sigma));
    if (size % 2 == 0) ++size;
    if (size <= 1) return {1.0};
    const auto half = static_cast<std::ptrdiff_t>(size / 2);
    std::vector<double> k(size);
    double sum = 0.0;
    for (std::ptrdiff_t x = -half; x <= half; ++x) {
        const double v = std::exp(-static_cast<double>(x * x) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(x + half)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

void gaussian_blur(std::span<float> image, std::size_t channels, std::size_t height, std::size_t width, double sigma) {
    if (image.size() != channels * height * width) throw UsageError("blur image size does not match its geometry");
    const auto kernel = make_blur_kernel(sigma);
    if (kernel.size() == 1) return;
    const auto half = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    std::vector<double> tmp(height * width);
    for (std::size_t c = 0; c < channels; ++c) {
        float* plane = image.data() + c * height * width;
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t t = -half; t <= half; ++t) {
                    acc += kernel[static_cast<std::size_t>(t + half)] *
                           plane[y * width + reflect(static_cast<std::ptrdiff_t>(x) + t, width)];
                }
                tmp[y * width + x] = acc;
            }
        }
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t t = -half; t <= half; ++t) {
                    acc += kernel[static_cast<std::size_t>(t + half)] *
                           tmp[reflect(static_cast<std::ptrdiff_t>(y) + t, height) * width + x];
                }
                plane[y * width + x] = clamp_pixel(acc);
            }
        }
    }
}

void distort_image(std::span<float> image, std::size_t channels, std::size_t height, std::size_t width,
                   const DistortionSpec& spec, std::uint64_t id) {
    switch (spec.kind) {
    case Kind::identity: return;
    case Kind::awgn: {
        Rng rng(mix_seed(spec.seed, id));
        awgn(image, spec.sigma, rng);
        return;
    }
    case Kind::blur: gaussian_blur(image, channels, height, width, spec.sigma); return;
    }
}

data::Dataset distort_dataset(const data::Dataset& dataset, const DistortionSpec& spec) {
    spec.validate();
    dataset.validate();
    data::Dataset out = dataset;
    parallel_for(out.size(), [&](std::size_t i) {
        distort_image(out.image(i), out.channels, out.height, out.width, spec, out.ids[i]);
    });
    out.provenance["distortion"] = spec;
    return out;
}

} // namespace ftriage::distortion
