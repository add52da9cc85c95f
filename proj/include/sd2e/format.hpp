#pragma once

#include <string>
#include <string_view>

namespace sd2e {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Strict full-string double parse; throws ParseError naming `what`.
double parse_double(std::string_view text, std::string_view what);

/// Write `content` to `path` through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace sd2e
