#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crisk::csv {

/// Splits one comma-delimited line; surrounding whitespace and a single pair
/// of double quotes are stripped from each field. No embedded commas.
std::vector<std::string_view> split(std::string_view line, char delim = ',');

std::optional<long long> parse_int(std::string_view field);
std::optional<double> parse_double(std::string_view field);

/// Shortest round-trip representation of a double.
std::string format_double(double value);

}  // namespace crisk::csv
