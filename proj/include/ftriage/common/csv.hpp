#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ftriage {

/// Shortest-roundtrip-ish fixed formatting ("%.10g") so CSV bytes are stable.
std::string format_number(double v);

/// Row-oriented CSV builder. Fields are written as given; callers only emit
/// identifiers and numbers, none of which need quoting.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    CsvWriter& field(std::string_view text);
    CsvWriter& field(double v);
    CsvWriter& field(std::int64_t v);
    CsvWriter& field(std::uint64_t v);
    CsvWriter& field(int v) { return field(static_cast<std::int64_t>(v)); }
    CsvWriter& field(unsigned v) { return field(static_cast<std::uint64_t>(v)); }
    void end_row();

    const std::string& str() const noexcept { return out_; }
    void save(const std::filesystem::path& path) const;

private:
    std::size_t columns_;
    std::size_t in_row_ = 0;
    std::string out_;
};

/// Minimal reader for the files CsvWriter produces (no quoting).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

} // namespace ftriage
