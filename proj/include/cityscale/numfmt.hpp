#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cityscale {

// Output convention for every derived quantity: 12 significant digits.
std::string format_number(double value);

// Shortest text that reads back to exactly `value`.
std::string format_shortest(double value);

// Whole-token decimal parse; rejects trailing garbage, empty text and
// non-finite results.
std::optional<double> parse_number(std::string_view text);

// Splits on commas; tokens never contain embedded commas or quotes.
std::vector<std::string_view> split_csv(std::string_view line);

// Strips one trailing '\r'.
std::string_view chomp(std::string_view line);

}  // namespace cityscale
