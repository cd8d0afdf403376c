#pragma once

// Consolidated sample statistics for latency series.
//
// Conventions, chosen once and used everywhere:
//   std        sample standard deviation (n-1); 0 for n < 2
//   skew       Fisher-Pearson g1 = m3 / m2^(3/2), population moments
//   kurtosis   excess g2 = m4 / m2^2 - 3
//   quantiles  linear interpolation on the sorted sample at p*(n-1)
//   jitter     mean absolute successive difference
//
// skew/kurtosis are absent (nullopt) when the sample is too small (n < 3,
// n < 4) or degenerate (m2 == 0).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace chainbench {

struct StatsSummary {
  double mean = 0;
  double std_dev = 0;
  std::optional<double> skew;
  std::optional<double> kurtosis;
  double min = 0;
  double q25 = 0;
  double q50 = 0;
  double q75 = 0;
  double p99 = 0;
  double max = 0;
  std::size_t n = 0;

  bool operator==(const StatsSummary&) const = default;
};

/// p in [0,1] over an ascending-sorted sample.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  if (sorted.size() == 1) return sorted[0];
  double pos = p * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline StatsSummary summarize(const std::vector<double>& samples) {
  if (samples.empty()) throw std::invalid_argument("summarize of empty sample");
  StatsSummary s;
  s.n = samples.size();
  const auto n = static_cast<double>(s.n);

  long double sum = 0;
  for (double v : samples) sum += v;
  s.mean = static_cast<double>(sum / n);

  long double m2 = 0, m3 = 0, m4 = 0;
  for (double v : samples) {
    long double d = static_cast<long double>(v) - s.mean;
    long double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;

  s.std_dev = s.n < 2 ? 0.0
                      : static_cast<double>(std::sqrt(m2 * n / (n - 1)));
  if (m2 > 0 && s.n >= 3) s.skew = static_cast<double>(m3 / std::pow(m2, 1.5L));
  if (m2 > 0 && s.n >= 4) s.kurtosis = static_cast<double>(m4 / (m2 * m2) - 3.0L);

  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.q25 = quantile_sorted(sorted, 0.25);
  s.q50 = quantile_sorted(sorted, 0.50);
  s.q75 = quantile_sorted(sorted, 0.75);
  s.p99 = quantile_sorted(sorted, 0.99);
  return s;
}

inline double jitter(const std::vector<double>& series) {
  if (series.size() < 2) throw std::invalid_argument("jitter needs at least two samples");
  long double sum = 0;
  for (std::size_t i = 1; i < series.size(); ++i) sum += std::abs(series[i] - series[i - 1]);
  return static_cast<double>(sum / static_cast<double>(series.size() - 1));
}

struct HistogramBin {
  double lo = 0;  // bin covers [lo, lo + width)
  std::uint64_t count = 0;

  bool operator==(const HistogramBin&) const = default;
};

/// Contiguous bins from the lowest to the highest occupied one; empty bins in
/// between are kept so the bin list renders as a gap-free histogram.
inline std::vector<HistogramBin> histogram(const std::vector<double>& samples,
                                           double bin_width) {
  if (bin_width <= 0) throw std::invalid_argument("bin width must be positive");
  if (samples.empty()) return {};
  auto bin_of = [bin_width](double v) {
    return static_cast<long long>(std::floor(v / bin_width));
  };
  long long lo_bin = bin_of(samples[0]);
  long long hi_bin = lo_bin;
  for (double v : samples) {
    lo_bin = std::min(lo_bin, bin_of(v));
    hi_bin = std::max(hi_bin, bin_of(v));
  }
  std::vector<HistogramBin> bins(static_cast<std::size_t>(hi_bin - lo_bin + 1));
  for (std::size_t i = 0; i < bins.size(); ++i)
    bins[i].lo = static_cast<double>(lo_bin + static_cast<long long>(i)) * bin_width;
  for (double v : samples) bins[static_cast<std::size_t>(bin_of(v) - lo_bin)].count++;
  return bins;
}

/// Average ranks for ties, then Pearson correlation of the rank vectors.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("rank correlation needs equal sizes");
  if (x.size() < 2) throw std::invalid_argument("rank correlation needs n >= 2");
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0 || dy == 0) return 0.0;
  return num / std::sqrt(dx * dy);
}

}  // namespace chainbench
