#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mushroom {

/// Whole-file read/write; failures throw DataError naming the path.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view contents);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
/// Fixed-point text with `decimals` places.
std::string format_fixed(double v, int decimals);
/// Strict full-string parse; throws DataError with `what` in the message.
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

} // namespace mushroom
