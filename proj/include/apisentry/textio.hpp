#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace apisentry::textio {

/// Shortest-roundtrip is not enough for diffable artifacts; this always
/// prints 17 significant digits so values reload bit-exactly.
std::string format_double(double value);

std::vector<std::string_view> split(std::string_view text, char delim);
std::string_view trim(std::string_view text);

/// Strict parsers; throw ValidationError naming `what` on failure.
std::uint64_t parse_uint(std::string_view text, std::string_view what);
std::int64_t parse_int(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Splits on LF, dropping a trailing CR on each line.
std::vector<std::string_view> lines(std::string_view content);

}  // namespace apisentry::textio
