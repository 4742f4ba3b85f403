#pragma once

// Small synthetic datasets in the CIFAR geometry. Each class gets its own
// stripe frequency and colour bias so a tiny network can learn it quickly.

#include "ftriage/data/cifar.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

namespace ftriage::fixture {

inline data::Dataset synthetic(std::size_t n, std::size_t classes, std::uint64_t seed, double noise = 20.0) {
    data::Dataset d;
    d.class_count = classes;
    d.pixels.resize(n * d.image_size());
    d.labels.resize(n);
    d.ids.resize(n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, noise > 0.0 ? noise : 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % classes);
        d.labels[i] = label;
        d.ids[i] = i;
        auto img = d.image(i);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < 32; ++y) {
                for (std::size_t x = 0; x < 32; ++x) {
                    double v = 128.0 + 60.0 * std::sin(static_cast<double>(x * (label + 1) + y * (label % 3)) / 6.0);
                    if (c == static_cast<std::size_t>(label % 3)) v += 40.0;
                    v = std::round(v + (noise > 0.0 ? jitter(rng) : 0.0));
                    img[(c * 32 + y) * 32 + x] = static_cast<float>(std::clamp(v, 0.0, 255.0));
                }
            }
        }
    }
    return d;
}

/// Writes CIFAR-10 style batch files (5 train + 1 test) into dir.
inline void write_cifar10(const std::filesystem::path& dir, std::size_t per_file, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    for (int b = 1; b <= 5; ++b) {
        data::write_cifar_file(synthetic(per_file, 10, seed + static_cast<std::uint64_t>(b)), data::CifarVariant::cifar10,
                               dir / ("data_batch_" + std::to_string(b) + ".bin"));
    }
    data::write_cifar_file(synthetic(per_file, 10, seed + 99), data::CifarVariant::cifar10, dir / "test_batch.bin");
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("ftriage_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace ftriage::fixture
