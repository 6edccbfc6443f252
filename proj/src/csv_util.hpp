#pragma once

// Small CSV helpers shared by the readers and writers. Fields never contain
// quotes in this toolkit's formats; commas in link ids are rejected on write.

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "linkscope/error.hpp"

namespace linkscope::detail {

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string escape_field(const std::string& field) {
  if (field.find_first_of(",\n\r\"") != std::string::npos)
    throw ArgumentError("field '" + field + "' contains a CSV delimiter");
  return field;
}

inline std::string format_fixed(double value, int digits) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, digits);
  return std::string(buf, ptr);
}

// Shortest representation that round-trips exactly.
inline std::string format_exact(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view text, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw FormatError("invalid number '" + std::string(text) + "'", line_no);
  return v;
}

inline int parse_int(std::string_view text, std::size_t line_no) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw FormatError("invalid integer '" + std::string(text) + "'", line_no);
  return v;
}

inline std::string sample_column(std::size_t i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, ",s%03zu", i);
  return buf;
}

}  // namespace linkscope::detail
