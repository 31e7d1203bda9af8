#pragma once

// Exact text round-tripping of doubles and small tokenizing helpers shared by
// the dump/load code paths.

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "avid/error.hpp"

namespace avid::textio {

inline void write_double(std::ostream& out, double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) fail(ErrorCode::Io, "write_double: to_chars failed");
  out.write(buf, end - buf);
}

inline std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) fail(ErrorCode::Io, "format_double: to_chars failed");
  return std::string(buf, end);
}

inline double parse_double(std::string_view s) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    fail(ErrorCode::Parse, "not a number: '" + std::string(s) + "'");
  return x;
}

template <class Int>
Int parse_int(std::string_view s) {
  Int x{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    fail(ErrorCode::Parse, "not an integer: '" + std::string(s) + "'");
  return x;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::string next_line(std::istream& in, std::string_view what) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Parse, "unexpected end of input reading " + std::string(what));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

/// "key=value" -> value, or a Parse error naming the expected key.
inline std::string_view field(std::string_view token, std::string_view key) {
  if (token.size() <= key.size() || token.substr(0, key.size()) != key || token[key.size()] != '=')
    fail(ErrorCode::Parse, "expected field '" + std::string(key) + "', got '" + std::string(token) + "'");
  return token.substr(key.size() + 1);
}

}  // namespace avid::textio
