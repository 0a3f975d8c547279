#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace btdiff::csv {

using Row = std::vector<std::string>;

/// Reads a comma-separated file. No quoting support; fields are trimmed of
/// surrounding whitespace and a trailing '\r'. Blank lines are skipped.
std::vector<Row> read_file(const std::filesystem::path& path);

std::vector<Row> parse(std::string_view text);

/// Strict decimal parse: optional sign, digits, optional '.', optional
/// exponent. Rejects thousands separators, hex, inf and nan.
std::optional<double> parse_double(std::string_view field);

std::optional<long long> parse_int(std::string_view field);

/// Shortest representation that round-trips to the same double.
std::string format_double(double x);

std::string join(const Row& fields);

/// Writes text atomically enough for our purposes; throws IoError.
void write_text(const std::filesystem::path& path, std::string_view text);

std::string read_text(const std::filesystem::path& path);

}  // namespace btdiff::csv
