#pragma once

// Consolidated-statistics reporting: an aligned text table with per-column
// minima flagged across deployment variants, a lossless CSV rendering, and
// histogram CSV output.

#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chainbench/analysis.hpp"
#include "chainbench/model.hpp"
#include "chainbench/stats.hpp"

namespace chainbench {

using ReportSummaries = std::map<std::pair<Kpi, DeploymentVariant>, StatsSummary>;

struct RenderedReport {
  std::string text;
  std::string csv;
};

inline constexpr char kReportCsvHeader[] =
    "kpi,variant,mean,std,skew,kurtosis,min,q25,q50,q75,p99,max,n";
inline constexpr char kHistogramCsvHeader[] = "bin_lo_ms,count";

inline std::optional<Kpi> parse_kpi(const std::string& s) {
  if (s == "E2E") return Kpi::E2E;
  if (s == "Idle") return Kpi::Idle;
  if (s == "Communication") return Kpi::Communication;
  if (s == "Computation") return Kpi::Computation;
  return std::nullopt;
}

namespace report_detail {

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_fixed2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// the ten flaggable statistic columns, in table order
inline std::vector<std::optional<double>> stat_columns(const StatsSummary& s) {
  return {s.mean, s.std_dev, s.skew, s.kurtosis, s.min,
          s.q25,  s.q50,     s.q75,  s.p99,      s.max};
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace report_detail

inline std::string render_report_csv(const ReportSummaries& summaries) {
  if (summaries.empty()) throw std::invalid_argument("report needs at least one summary");
  std::ostringstream out;
  out << kReportCsvHeader << '\n';
  for (const auto& [key, s] : summaries) {
    out << kpi_name(key.first) << ',' << variant_name(key.second);
    auto num = [&](double v) { out << ',' << report_detail::fmt_g17(v); };
    auto opt = [&](const std::optional<double>& v) {
      out << ',' << (v ? report_detail::fmt_g17(*v) : "nan");
    };
    num(s.mean);
    num(s.std_dev);
    opt(s.skew);
    opt(s.kurtosis);
    num(s.min);
    num(s.q25);
    num(s.q50);
    num(s.q75);
    num(s.p99);
    num(s.max);
    out << ',' << s.n << '\n';
  }
  return out.str();
}

inline ReportSummaries parse_report_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader)
    throw std::runtime_error("report CSV: bad or missing header");
  ReportSummaries out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = report_detail::split_csv_line(line);
    if (f.size() != 13)
      throw std::runtime_error("report CSV line " + std::to_string(lineno) +
                               ": expected 13 fields, got " + std::to_string(f.size()));
    auto kpi = parse_kpi(f[0]);
    auto variant = parse_variant(f[1]);
    if (!kpi) throw std::runtime_error("report CSV: unknown kpi '" + f[0] + "'");
    if (!variant) throw std::runtime_error("report CSV: unknown variant '" + f[1] + "'");
    auto num = [&](const std::string& s) { return std::strtod(s.c_str(), nullptr); };
    auto opt = [&](const std::string& s) -> std::optional<double> {
      if (s == "nan") return std::nullopt;
      return num(s);
    };
    StatsSummary st;
    st.mean = num(f[2]);
    st.std_dev = num(f[3]);
    st.skew = opt(f[4]);
    st.kurtosis = opt(f[5]);
    st.min = num(f[6]);
    st.q25 = num(f[7]);
    st.q50 = num(f[8]);
    st.q75 = num(f[9]);
    st.p99 = num(f[10]);
    st.max = num(f[11]);
    st.n = std::strtoull(f[12].c_str(), nullptr, 10);
    out[{*kpi, *variant}] = st;
  }
  return out;
}

/// Aligned table, rows grouped by KPI then variant. Within each KPI group the
/// per-column minimum across variants is flagged with '*'; ties all flagged.
inline std::string render_report_text(const ReportSummaries& summaries) {
  if (summaries.empty()) throw std::invalid_argument("report needs at least one summary");

  const std::vector<std::string> headers = {"KPI", "Variant", "Mean", "Std", "Skew",
                                            "Kurtosis", "Min",  "Q25", "Q50", "Q75",
                                            "P99", "Max", "N"};
  struct Row {
    std::vector<std::string> cells;
    Kpi kpi;
  };
  std::vector<Row> rows;
  for (const auto& [key, s] : summaries) {
    Row row;
    row.kpi = key.first;
    row.cells.push_back(kpi_name(key.first));
    row.cells.push_back(variant_name(key.second));
    for (const auto& v : report_detail::stat_columns(s))
      row.cells.push_back(v ? report_detail::fmt_fixed2(*v) : "nan");
    row.cells.push_back(std::to_string(s.n));
    rows.push_back(std::move(row));
  }

  // flag per-column minima within each KPI group
  for (std::size_t begin = 0; begin < rows.size();) {
    std::size_t end = begin;
    while (end < rows.size() && rows[end].kpi == rows[begin].kpi) ++end;
    std::vector<const StatsSummary*> group;
    std::size_t idx = 0;
    for (const auto& [key, s] : summaries) {
      if (idx >= begin && idx < end) group.push_back(&s);
      ++idx;
    }
    for (std::size_t col = 0; col < 10; ++col) {
      std::optional<double> min;
      for (const StatsSummary* s : group) {
        auto v = report_detail::stat_columns(*s)[col];
        if (v && (!min || *v < *min)) min = v;
      }
      if (!min) continue;
      for (std::size_t r = 0; r < group.size(); ++r) {
        auto v = report_detail::stat_columns(*group[r])[col];
        if (v && *v == *min) rows[begin + r].cells[col + 2] += '*';
      }
    }
    begin = end;
  }

  std::vector<std::size_t> width(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) width[c] = headers[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.cells.size(); ++c)
      width[c] = std::max(width[c], row.cells[c].size());

  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out << "  ";
      // left-align the two label columns, right-align numbers
      if (c < 2) {
        out << cells[c] << std::string(width[c] - cells[c].size(), ' ');
      } else {
        out << std::string(width[c] - cells[c].size(), ' ') << cells[c];
      }
    }
    out << '\n';
  };
  emit(headers);
  std::vector<std::string> rule;
  for (std::size_t c = 0; c < headers.size(); ++c) rule.push_back(std::string(width[c], '-'));
  emit(rule);
  for (const auto& row : rows) emit(row.cells);
  return out.str();
}

inline RenderedReport render_report(const ReportSummaries& summaries) {
  return {render_report_text(summaries), render_report_csv(summaries)};
}

inline std::string render_histogram_csv(const std::vector<HistogramBin>& bins) {
  std::ostringstream out;
  out << kHistogramCsvHeader << '\n';
  for (const auto& b : bins)
    out << report_detail::fmt_g17(b.lo) << ',' << b.count << '\n';
  return out.str();
}

inline std::vector<HistogramBin> parse_histogram_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kHistogramCsvHeader)
    throw std::runtime_error("histogram CSV: bad or missing header");
  std::vector<HistogramBin> bins;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = report_detail::split_csv_line(line);
    if (f.size() != 2) throw std::runtime_error("histogram CSV: expected 2 fields");
    HistogramBin b;
    b.lo = std::strtod(f[0].c_str(), nullptr);
    b.count = std::strtoull(f[1].c_str(), nullptr, 10);
    bins.push_back(b);
  }
  return bins;
}

}  // namespace chainbench
