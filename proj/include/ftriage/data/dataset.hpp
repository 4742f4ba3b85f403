#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ftriage::data {

enum class SplitTag { none, train, val, test };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& text);

/// Images stored channel-major (C,H,W) as floats in the 0-255 domain.
/// ids are stable source indices; they survive subsetting and shuffling so
/// per-image seeds do not depend on position.
struct Dataset {
    std::size_t channels = 3;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t class_count = 0;
    std::vector<float> pixels;
    std::vector<int> labels;
    std::vector<std::uint64_t> ids;
    SplitTag split = SplitTag::none;
    nlohmann::json provenance = nlohmann::json::object();

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    std::size_t image_size() const noexcept { return channels * height * width; }

    std::span<const float> image(std::size_t i) const { return {pixels.data() + i * image_size(), image_size()}; }
    std::span<float> image(std::size_t i) { return {pixels.data() + i * image_size(), image_size()}; }

    /// Throws InputError when sizes disagree or a label is out of range.
    void validate() const;

    Dataset subset(std::span<const std::size_t> indices) const;
    void append(const Dataset& other);
};

/// Internal single-file cache: "FTDS" | u32 version | u64 N | u32 classes |
/// u32 C,H,W | u32 split | u32 len + provenance JSON | i32 labels[N] |
/// u64 ids[N] | f32 pixels[N*C*H*W].
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

} // namespace ftriage::data
