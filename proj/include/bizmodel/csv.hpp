#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bizmodel::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based line number in the source file for each row.
    std::vector<std::size_t> line_numbers;

    std::optional<std::size_t> column(std::string_view name) const;
    /// Like column() but throws DataError naming the missing column.
    std::size_t require_column(std::string_view name) const;
};

/// Parses RFC 4180-style CSV (quoted fields, doubled quotes). A header row
/// is required. Blank lines are skipped.
Table parse(std::string_view text);
Table read_file(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
/// Fixed-point form for human-facing tables.
std::string format_fixed(double v, int decimals);

/// Strict numeric parse; rejects trailing garbage. Returns nullopt on failure.
/// "NaN"/"inf" parse to their IEEE values so callers can reject them.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::string escape(std::string_view field);

/// Incrementally builds CSV text.
class Writer {
public:
    explicit Writer(const std::vector<std::string>& header);
    Writer& row(const std::vector<std::string>& fields);
    const std::string& str() const { return out_; }

private:
    std::size_t width_;
    std::string out_;
};

/// Writes to a sibling temporary file and renames it into place, so
/// readers never observe a partially written file.
void write_atomic(const std::filesystem::path& path, std::string_view content);

} // namespace bizmodel::csv
