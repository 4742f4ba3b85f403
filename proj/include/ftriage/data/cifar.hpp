#pragma once

#include "ftriage/data/dataset.hpp"

#include <optional>

namespace ftriage::data {

enum class CifarVariant { cifar10, cifar100 };

std::string to_string(CifarVariant v);
CifarVariant cifar_variant_from_string(const std::string& text);

// Canonical binary layout: one record per image, label byte(s) then 3072
// pixel bytes, R plane, G plane, B plane, each row-major.
inline constexpr std::size_t kCifarPixels = 3 * 32 * 32;
std::size_t cifar_record_bytes(CifarVariant v);
std::size_t cifar_class_count(CifarVariant v);

// Test images get ids from here on, so ids never collide across splits and
// id-seeded distortions draw independent noise for train and test.
inline constexpr std::uint64_t kTestIdOffset = 1'000'000;

struct CifarLoadOptions {
    // Records expected per file. Unset means the canonical counts
    // (10000 per CIFAR-10 file, 50000/10000 for CIFAR-100 train/test).
    std::optional<std::size_t> records_per_file;
};

/// Parses a single batch file. ids start at id_offset.
Dataset load_cifar_file(const std::filesystem::path& file, CifarVariant variant, std::size_t expected_records,
                        std::uint64_t id_offset = 0);

/// train: data_batch_1..5.bin (CIFAR-10) or train.bin (CIFAR-100);
/// test: test_batch.bin or test.bin. Wrong sizes throw FormatError naming the
/// file and the expected byte count.
Dataset load_cifar(const std::filesystem::path& dir, CifarVariant variant, SplitTag split,
                   const CifarLoadOptions& options = {});

inline Dataset load_cifar10(const std::filesystem::path& dir, SplitTag split, const CifarLoadOptions& options = {}) {
    return load_cifar(dir, CifarVariant::cifar10, split, options);
}
inline Dataset load_cifar100(const std::filesystem::path& dir, SplitTag split, const CifarLoadOptions& options = {}) {
    return load_cifar(dir, CifarVariant::cifar100, split, options);
}

/// Writes records in the canonical layout (used to build fixtures).
void write_cifar_file(const Dataset& dataset, CifarVariant variant, const std::filesystem::path& file);

} // namespace ftriage::data
