#include "ftriage/data/cifar.hpp"

#include "ftriage/common/bytes.hpp"

#include <cmath>

namespace ftriage::data {

std::string to_string(CifarVariant v) { return v == CifarVariant::cifar10 ? "cifar10" : "cifar100"; }

CifarVariant cifar_variant_from_string(const std::string& text) {
    if (text == "cifar10") return CifarVariant::cifar10;
    if (text == "cifar100") return CifarVariant::cifar100;
    throw ConfigError("unknown dataset '" + text + "' (expected cifar10 or cifar100)");
}

std::size_t cifar_record_bytes(CifarVariant v) { return (v == CifarVariant::cifar10 ? 1 : 2) + kCifarPixels; }
std::size_t cifar_class_count(CifarVariant v) { return v == CifarVariant::cifar10 ? 10 : 100; }

Dataset load_cifar_file(const std::filesystem::path& file, CifarVariant variant, std::size_t expected_records,
                        std::uint64_t id_offset) {
    const std::string bytes = read_file_bytes(file);
    const std::size_t record = cifar_record_bytes(variant);
    const std::size_t expected_bytes = expected_records * record;
    if (bytes.size() != expected_bytes) {
        throw FormatError(file.string() + ": " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected_bytes) + " (" + std::to_string(expected_records) + " records of " +
                          std::to_string(record) + ")");
    }
    Dataset d;
    d.class_count = cifar_class_count(variant);
    d.labels.resize(expected_records);
    d.ids.resize(expected_records);
    d.pixels.resize(expected_records * kCifarPixels);
    const auto* src = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < expected_records; ++i) {
        const unsigned char* rec = src + i * record;
        // CIFAR-100 records carry the coarse label first; only the fine one is used
        const int label = variant == CifarVariant::cifar10 ? rec[0] : rec[1];
        if (static_cast<std::size_t>(label) >= d.class_count) {
            throw FormatError(file.string() + ": record " + std::to_string(i) + " has label " + std::to_string(label));
        }
        d.labels[i] = label;
        d.ids[i] = id_offset + i;
        const unsigned char* px = rec + (record - kCifarPixels);
        float* dst = d.pixels.data() + i * kCifarPixels;
        for (std::size_t k = 0; k < kCifarPixels; ++k) dst[k] = static_cast<float>(px[k]);
    }
    return d;
}

Dataset load_cifar(const std::filesystem::path& dir, CifarVariant variant, SplitTag split,
                   const CifarLoadOptions& options) {
    if (split != SplitTag::train && split != SplitTag::test) {
        throw UsageError("CIFAR binaries only provide train and test splits");
    }
    std::vector<std::string> files;
    std::size_t canonical = 10000;
    if (variant == CifarVariant::cifar10) {
        if (split == SplitTag::train) {
            for (int i = 1; i <= 5; ++i) files.push_back("data_batch_" + std::to_string(i) + ".bin");
        } else {
            files.push_back("test_batch.bin");
        }
    } else {
        files.push_back(split == SplitTag::train ? "train.bin" : "test.bin");
        if (split == SplitTag::train) canonical = 50000;
    }
    const std::size_t per_file = options.records_per_file.value_or(canonical);

    // parse everything before committing so a bad file leaves nothing behind
    Dataset out;
    const std::uint64_t base = split == SplitTag::test ? kTestIdOffset : 0;
    for (const auto& name : files) {
        out.append(load_cifar_file(dir / name, variant, per_file, base + out.size()));
    }
    out.split = split;
    out.provenance = {{"source", to_string(variant)},
                      {"path", dir.string()},
                      {"split", to_string(split)},
                      {"records_per_file", per_file}};
    return out;
}

void write_cifar_file(const Dataset& dataset, CifarVariant variant, const std::filesystem::path& file) {
    dataset.validate();
    if (dataset.image_size() != kCifarPixels) throw UsageError("CIFAR records hold 3x32x32 images");
    std::string bytes;
    bytes.reserve(dataset.size() * cifar_record_bytes(variant));
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (variant == CifarVariant::cifar100) bytes.push_back(static_cast<char>(dataset.labels[i] / 5));
        bytes.push_back(static_cast<char>(dataset.labels[i]));
        for (float v : dataset.image(i)) {
            const long q = std::lround(v);
            bytes.push_back(static_cast<char>(static_cast<unsigned char>(q < 0 ? 0 : (q > 255 ? 255 : q))));
        }
    }
    write_file_bytes(file, bytes);
}

} // namespace ftriage::data
