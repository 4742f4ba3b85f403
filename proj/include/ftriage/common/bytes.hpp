#pragma once

// Little-endian byte buffers for the checkpoint and dataset cache formats.

#include "ftriage/common/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

namespace ftriage {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
public:
    template <typename T>
    void pod(const T& v) {
        out_.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
    void text(std::string_view s) {
        pod(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    void raw(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }
    const std::string& bytes() const noexcept { return out_; }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

/// Reads from a borrowed buffer; every short read throws FormatError naming
/// the stream (`what`), the field and the offset.
class ByteReader {
public:
    ByteReader(std::string_view in, std::string what) : in_(in), what_(std::move(what)) {}

    template <typename T>
    T pod(const std::string& field) {
        T v{};
        need(sizeof v, field);
        std::memcpy(&v, in_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    std::string text(const std::string& field) {
        const auto n = pod<std::uint32_t>(field);
        need(n, field);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    void raw(void* dst, std::size_t n, const std::string& field) {
        need(n, field);
        if (n) std::memcpy(dst, in_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }
    bool done() const noexcept { return pos_ == in_.size(); }

    [[noreturn]] void fail(const std::string& message) const { throw FormatError(what_ + ": " + message); }

private:
    void need(std::size_t n, const std::string& field) const {
        if (in_.size() - pos_ < n) {
            fail("truncated while reading " + field + " at byte " + std::to_string(pos_));
        }
    }

    std::string_view in_;
    std::string what_;
    std::size_t pos_ = 0;
};

/// Whole-file helpers; failures throw InputError naming the path.
std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

} // namespace ftriage
