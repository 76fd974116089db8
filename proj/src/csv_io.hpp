#pragma once

// Internal helpers shared by the dataset, params and trajectory writers.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace twolayer::detail {

/// %.17g, which round-trips every finite double exactly.
std::string format_double(double x);

/// Parse a full token as a double; false on any trailing garbage.
bool parse_double(std::string_view token, double& out);

struct CsvRow {
  std::size_t line = 0;  // 1-based
  std::vector<double> values;
};

/// Reads numeric comma-separated rows, skipping blank lines and lines that
/// start with '#'. Throws IoError / FormatError.
std::vector<CsvRow> read_numeric_csv(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
/// Truncates and writes. Throws IoError.
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace twolayer::detail
