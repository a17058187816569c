#pragma once

// Small helpers shared by the plain-text file formats. Fields never contain
// commas or quotes, so no quoting is supported.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace labconv::csv {

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Whitespace-separated tokens.
std::vector<std::string_view> tokens(std::string_view line);

int parse_int(std::string_view field, const std::string& file, std::size_t line);
long long parse_i64(std::string_view field, const std::string& file, std::size_t line);
double parse_double(std::string_view field, const std::string& file, std::size_t line);

/// Shortest text that parses back to the identical double (17 significant digits).
std::string format_double(double v);

/// Fixed short format used in human-facing reports.
std::string format_metric(double v);

std::ofstream open_output(const std::filesystem::path& path);
std::ifstream open_input(const std::filesystem::path& path);

/// Strips a trailing '\r' and surrounding blanks.
std::string_view trim(std::string_view s);

}  // namespace labconv::csv
