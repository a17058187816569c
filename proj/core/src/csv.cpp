#include "labconv/csv.hpp"

#include "labconv/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace labconv::csv {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> tokens(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
            ++i;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
            ++i;
        }
        if (i > start) {
            out.push_back(line.substr(start, i - start));
        }
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() &&
           (s.back() == '\r' || s.back() == '\n' || s.back() == ' ' || s.back() == '\t')) {
        s.remove_suffix(1);
    }
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    return s;
}

namespace {

template <typename T>
T parse_integral(std::string_view field, const std::string& file, std::size_t line) {
    field = trim(field);
    T v{};
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc() || ptr != end || field.empty()) {
        throw ParseError(file, line, "expected an integer, got '" + std::string(field) + "'");
    }
    return v;
}

}  // namespace

int parse_int(std::string_view field, const std::string& file, std::size_t line) {
    return parse_integral<int>(field, file, line);
}

long long parse_i64(std::string_view field, const std::string& file, std::size_t line) {
    return parse_integral<long long>(field, file, line);
}

double parse_double(std::string_view field, const std::string& file, std::size_t line) {
    field = trim(field);
    if (field == "nan" || field == "NA") {
        return std::nan("");
    }
    if (field == "inf") {
        return INFINITY;
    }
    double v = 0.0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc() || ptr != end || field.empty()) {
        throw ParseError(file, line, "expected a number, got '" + std::string(field) + "'");
    }
    return v;
}

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_metric(double v) {
    if (!std::isfinite(v)) {
        return "NA";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    return in;
}

}  // namespace labconv::csv
