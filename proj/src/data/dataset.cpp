#include "ftriage/data/dataset.hpp"

#include "ftriage/common/bytes.hpp"

#include <cmath>

namespace ftriage::data {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

} // namespace

std::string to_string(SplitTag tag) {
    switch (tag) {
    case SplitTag::none: return "none";
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
    }
    return "none";
}

SplitTag split_tag_from_string(const std::string& text) {
    if (text == "none") return SplitTag::none;
    if (text == "train") return SplitTag::train;
    if (text == "val") return SplitTag::val;
    if (text == "test") return SplitTag::test;
    throw ConfigError("unknown split tag '" + text + "'");
}

void Dataset::validate() const {
    if (channels == 0 || height == 0 || width == 0) throw InputError("dataset has an empty image geometry");
    if (pixels.size() != size() * image_size()) {
        throw InputError("dataset holds " + std::to_string(pixels.size()) + " pixel values for " +
                         std::to_string(size()) + " images of " + std::to_string(image_size()));
    }
    if (ids.size() != size()) throw InputError("dataset id count does not match label count");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
            throw InputError("label " + std::to_string(labels[i]) + " of image " + std::to_string(i) +
                             " outside [0," + std::to_string(class_count) + ")");
        }
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.channels = channels;
    out.height = height;
    out.width = width;
    out.class_count = class_count;
    out.split = split;
    out.provenance = provenance;
    out.labels.reserve(indices.size());
    out.ids.reserve(indices.size());
    out.pixels.reserve(indices.size() * image_size());
    for (const std::size_t i : indices) {
        if (i >= size()) throw UsageError("subset index " + std::to_string(i) + " out of range");
        out.labels.push_back(labels[i]);
        out.ids.push_back(ids[i]);
        const auto img = image(i);
        out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    }
    return out;
}

void Dataset::append(const Dataset& other) {
    if (empty() && class_count == 0) {
        channels = other.channels;
        height = other.height;
        width = other.width;
        class_count = other.class_count;
    }
    if (other.channels != channels || other.height != height || other.width != width ||
        other.class_count != class_count) {
        throw InputError("cannot append datasets with different geometry or class count");
    }
    pixels.insert(pixels.end(), other.pixels.begin(), other.pixels.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    ids.insert(ids.end(), other.ids.begin(), other.ids.end());
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    ByteWriter w;
    w.raw(kMagic, sizeof kMagic);
    w.pod(kVersion);
    w.pod(static_cast<std::uint64_t>(dataset.size()));
    w.pod(static_cast<std::uint32_t>(dataset.class_count));
    w.pod(static_cast<std::uint32_t>(dataset.channels));
    w.pod(static_cast<std::uint32_t>(dataset.height));
    w.pod(static_cast<std::uint32_t>(dataset.width));
    w.pod(static_cast<std::uint32_t>(dataset.split));
    w.text(dataset.provenance.dump());
    w.raw(dataset.labels.data(), dataset.labels.size() * sizeof(int));
    w.raw(dataset.ids.data(), dataset.ids.size() * sizeof(std::uint64_t));
    w.raw(dataset.pixels.data(), dataset.pixels.size() * sizeof(float));
    write_file_bytes(path, w.bytes());
}

Dataset load_dataset(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    ByteReader r(bytes, "dataset " + path.string());
    char magic[4];
    r.raw(magic, sizeof magic, "magic");
    if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) r.fail("magic is not FTDS");
    const auto version = r.pod<std::uint32_t>("version");
    if (version != kVersion) r.fail("version " + std::to_string(version) + " unsupported");
    Dataset d;
    const auto n = r.pod<std::uint64_t>("N");
    d.class_count = r.pod<std::uint32_t>("class_count");
    d.channels = r.pod<std::uint32_t>("channels");
    d.height = r.pod<std::uint32_t>("height");
    d.width = r.pod<std::uint32_t>("width");
    const auto split = r.pod<std::uint32_t>("split");
    if (split > static_cast<std::uint32_t>(SplitTag::test)) r.fail("split tag " + std::to_string(split) + " invalid");
    d.split = static_cast<SplitTag>(split);
    try {
        d.provenance = nlohmann::json::parse(r.text("provenance"));
    } catch (const nlohmann::json::exception& e) {
        r.fail(std::string("provenance is not JSON: ") + e.what());
    }
    // guard the allocation before trusting N
    const std::size_t per_image = sizeof(int) + sizeof(std::uint64_t) + d.image_size() * sizeof(float);
    if (per_image == 0 || n > r.remaining() / per_image) r.fail("header claims " + std::to_string(n) + " images, file too short");
    d.labels.resize(n);
    d.ids.resize(n);
    d.pixels.resize(n * d.image_size());
    r.raw(d.labels.data(), d.labels.size() * sizeof(int), "labels");
    r.raw(d.ids.data(), d.ids.size() * sizeof(std::uint64_t), "ids");
    r.raw(d.pixels.data(), d.pixels.size() * sizeof(float), "pixels");
    if (!r.done()) r.fail("trailing bytes after pixel data");
    try {
        d.validate();
    } catch (const InputError& e) {
        r.fail(e.what());
    }
    for (float v : d.pixels) {
        if (!std::isfinite(v)) r.fail("non-finite pixel value");
    }
    return d;
}

} // namespace ftriage::data
