#pragma once

// Small lexical helpers shared by the config parsers and the CLI:
// durations ("250us", "1.5ms"), byte sizes ("64KB", "8MB"), and exact
// millisecond <-> nanosecond decimal conversion done in integer math so
// spec files round-trip without floating point drift.

#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "chainbench/clock.hpp"

namespace chainbench {

inline bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
          c == '/' || c == '.' || c == ':'))
      return false;
  }
  return true;
}

/// Parses a duration token: integer or decimal number with an optional
/// ns/us/ms/s suffix. A bare number means nanoseconds.
inline std::optional<Ns> parse_duration_ns(std::string_view tok) {
  if (tok.empty()) return std::nullopt;
  size_t i = 0;
  while (i < tok.size() &&
         (std::isdigit(static_cast<unsigned char>(tok[i])) || tok[i] == '.'))
    ++i;
  std::string_view num = tok.substr(0, i);
  std::string_view unit = tok.substr(i);
  if (num.empty()) return std::nullopt;
  double scale = 1.0;
  if (unit == "ns" || unit.empty()) scale = 1.0;
  else if (unit == "us") scale = 1e3;
  else if (unit == "ms") scale = 1e6;
  else if (unit == "s") scale = 1e9;
  else return std::nullopt;
  try {
    double v = std::stod(std::string(num));
    if (v < 0) return std::nullopt;
    return static_cast<Ns>(v * scale + 0.5);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// Parses a size token: integer with optional B/KB/MB/GB suffix (powers of 1024).
inline std::optional<std::uint64_t> parse_size_bytes(std::string_view tok) {
  if (tok.empty()) return std::nullopt;
  size_t i = 0;
  while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i;
  std::string_view num = tok.substr(0, i);
  std::string_view unit = tok.substr(i);
  if (num.empty()) return std::nullopt;
  std::uint64_t mult = 1;
  if (unit.empty() || unit == "B") mult = 1;
  else if (unit == "KB" || unit == "K" || unit == "kB") mult = 1024;
  else if (unit == "MB" || unit == "M") mult = 1024ull * 1024;
  else if (unit == "GB" || unit == "G") mult = 1024ull * 1024 * 1024;
  else return std::nullopt;
  try {
    return std::stoull(std::string(num)) * mult;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// Millisecond decimal string -> nanoseconds, exact. Accepts up to six
/// fractional digits ("33.333333"); anything finer than 1 ns is rejected.
inline std::optional<Ns> parse_ms_decimal(std::string_view tok) {
  if (tok.empty()) return std::nullopt;
  auto dot = tok.find('.');
  std::string_view whole = tok.substr(0, dot == std::string_view::npos ? tok.size() : dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : tok.substr(dot + 1);
  if (whole.empty() && frac.empty()) return std::nullopt;
  if (frac.size() > 6) return std::nullopt;
  Ns value = 0;
  for (char c : whole) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    value = value * 10 + (c - '0');
    if (value > (1ll << 52)) return std::nullopt;
  }
  value *= kMillisecond;
  Ns scale = kMillisecond;
  for (char c : frac) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    scale /= 10;
    value += (c - '0') * scale;
  }
  return value;
}

/// Nanoseconds -> millisecond decimal string, exact inverse of parse_ms_decimal.
inline std::string format_ms_decimal(Ns ns) {
  Ns whole = ns / kMillisecond;
  Ns frac = ns % kMillisecond;
  std::string out = std::to_string(whole);
  if (frac != 0) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(frac));
    std::string f(buf);
    while (!f.empty() && f.back() == '0') f.pop_back();
    out += '.';
    out += f;
  }
  return out;
}

inline std::string format_bytes(std::uint64_t n) {
  if (n >= 1024ull * 1024 && n % (1024ull * 1024) == 0)
    return std::to_string(n / (1024ull * 1024)) + "MB";
  if (n >= 1024 && n % 1024 == 0) return std::to_string(n / 1024) + "KB";
  return std::to_string(n);
}

}  // namespace chainbench
