#pragma once

#include <chrono>
#include <cstdint>
#include <string>

namespace chainbench {

/// Nanoseconds on the host-wide monotonic clock. All trace timestamps and
/// latency arithmetic use this one clock so that cross-process differences
/// stay meaningful on a single host.
using Ns = std::int64_t;

inline Ns now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

constexpr Ns kMicrosecond = 1'000;
constexpr Ns kMillisecond = 1'000'000;
constexpr Ns kSecond = 1'000'000'000;

inline double ns_to_ms(Ns t) { return static_cast<double>(t) / 1e6; }
inline double ns_to_us(Ns t) { return static_cast<double>(t) / 1e3; }

}  // namespace chainbench
