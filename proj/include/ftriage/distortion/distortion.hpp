#pragma once

#include "ftriage/common/random.hpp"
#include "ftriage/data/dataset.hpp"

#include <span>

namespace ftriage::distortion {

enum class Kind { identity, awgn, blur };

std::string to_string(Kind kind);
Kind kind_from_string(const std::string& text);

/// awgn sigma is in 0-255 pixel units, blur sigma in pixels.
struct DistortionSpec {
    Kind kind = Kind::identity;
    double sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
    std::string label() const;  // e.g. "awgn-15"
    bool operator==(const DistortionSpec&) const = default;
};

void to_json(nlohmann::json& j, const DistortionSpec& s);
void from_json(const nlohmann::json& j, DistortionSpec& s);

/// Adds N(0, sigma) to every value of one image then clamps to [0,255].
void awgn(std::span<float> image, double sigma, Rng& rng);

/// Size round(4 sigma), bumped to odd, at least 1; Gaussian taps at integer
/// offsets normalized to sum 1.
std::vector<double> make_blur_kernel(double sigma);

/// Separable blur (rows then columns) of a C x H x W image with reflect-101
/// borders, clamped to [0,255].
void gaussian_blur(std::span<float> image, std::size_t channels, std::size_t height, std::size_t width, double sigma);

/// Distorts one image in place; `id` feeds the per-image seed.
void distort_image(std::span<float> image, std::size_t channels, std::size_t height, std::size_t width,
                   const DistortionSpec& spec, std::uint64_t id);

/// Seeds each image from (spec.seed, image id), so results do not depend on
/// order or thread count. Labels and ids are untouched.
data::Dataset distort_dataset(const data::Dataset& dataset, const DistortionSpec& spec);

} // namespace ftriage::distortion
