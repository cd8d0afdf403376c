#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "chainbench/report.hpp"

using namespace chainbench;

namespace {

StatsSummary make_summary(double base, std::size_t n = 100) {
  StatsSummary s;
  s.mean = base;
  s.std_dev = base / 10;
  s.skew = 0.5 + base / 100;
  s.kurtosis = -0.2 + base / 100;
  s.min = base / 2;
  s.q25 = base * 0.8;
  s.q50 = base;
  s.q75 = base * 1.2;
  s.p99 = base * 1.9;
  s.max = base * 2;
  s.n = n;
  return s;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("report rows render in fixed KPI and variant order") {
  ReportSummaries m;
  // inserted out of order on purpose; the map key ordering fixes the layout
  m[{Kpi::Computation, DeploymentVariant::MultiGroup}] = make_summary(3);
  m[{Kpi::E2E, DeploymentVariant::SingleGroup}] = make_summary(11);
  m[{Kpi::E2E, DeploymentVariant::InProcess}] = make_summary(10);
  m[{Kpi::Idle, DeploymentVariant::InProcess}] = make_summary(5);

  auto csv = render_report_csv(m);
  auto ls = lines_of(csv);
  REQUIRE(ls.size() == 5);
  REQUIRE(ls[0] == std::string(kReportCsvHeader));
  REQUIRE(ls[1].rfind("E2E,in_process,", 0) == 0);
  REQUIRE(ls[2].rfind("E2E,single_group,", 0) == 0);
  REQUIRE(ls[3].rfind("Idle,in_process,", 0) == 0);
  REQUIRE(ls[4].rfind("Computation,multi_group,", 0) == 0);
}

TEST_CASE("consolidated text table renders the pinned column order") {
  StatsSummary s;
  s.mean = 194.67;
  s.std_dev = 84.68;
  s.skew = 3.01;
  s.kurtosis = 19.94;
  s.min = 31.28;
  s.q25 = 139.84;
  s.q50 = 199.43;
  s.q75 = 223.85;
  s.p99 = 515.87;
  s.max = 1437.94;
  s.n = 100;
  ReportSummaries m;
  m[{Kpi::E2E, DeploymentVariant::InProcess}] = s;

  auto text = render_report_text(m);
  auto ls = lines_of(text);
  REQUIRE(ls.size() == 3);  // header, rule, one row
  REQUIRE(ls[0].find("Mean") < ls[0].find("Std"));
  REQUIRE(ls[0].find("Std") < ls[0].find("Skew"));
  REQUIRE(ls[0].find("Skew") < ls[0].find("Kurtosis"));
  REQUIRE(ls[0].find("Kurtosis") < ls[0].find("Min"));
  REQUIRE(ls[0].find("Min") < ls[0].find("Q25"));
  REQUIRE(ls[0].find("Q25") < ls[0].find("Q50"));
  REQUIRE(ls[0].find("Q50") < ls[0].find("Q75"));
  REQUIRE(ls[0].find("Q75") < ls[0].find("P99"));
  REQUIRE(ls[0].find("P99") < ls[0].find("Max"));
  REQUIRE(ls[0].find("Max") < ls[0].find("N"));

  const std::string& row = ls[2];
  std::vector<std::string> expect = {"194.67", "84.68",  "3.01",   "19.94", "31.28",
                                     "139.84", "199.43", "223.85", "515.87", "1437.94"};
  std::size_t pos = 0;
  for (const auto& v : expect) {
    auto at = row.find(v, pos);
    REQUIRE(at != std::string::npos);
    pos = at + v.size();
  }
}

TEST_CASE("per-column minima are flagged within each KPI group, ties included") {
  ReportSummaries m;
  auto a = make_summary(10);
  auto b = make_summary(12);
  auto c = make_summary(12);
  b.min = a.min;  // tie with the in_process minimum on the Min column
  c.skew.reset();
  c.kurtosis.reset();
  m[{Kpi::E2E, DeploymentVariant::InProcess}] = a;
  m[{Kpi::E2E, DeploymentVariant::SingleGroup}] = b;
  m[{Kpi::E2E, DeploymentVariant::MultiGroup}] = c;
  // a second group with one entry: its every defined column is the minimum
  m[{Kpi::Idle, DeploymentVariant::InProcess}] = make_summary(7);

  auto text = render_report_text(m);
  auto ls = lines_of(text);
  REQUIRE(ls.size() == 6);

  auto row_of = [&](const std::string& variant) {
    for (const auto& l : ls)
      if (l.find(variant) != std::string::npos && l.find("E2E") != std::string::npos) return l;
    return std::string();
  };
  auto flags = [](const std::string& row) {
    return std::count(row.begin(), row.end(), '*');
  };

  // in_process holds every E2E minimum (10 columns)
  REQUIRE(flags(row_of("in_process")) == 10);
  // single_group ties on min only
  REQUIRE(flags(row_of("single_group")) == 1);
  REQUIRE(row_of("single_group").find("5.00*") != std::string::npos);
  // multi_group has no minima and undefined skew/kurtosis
  REQUIRE(flags(row_of("multi_group")) == 0);
  REQUIRE(row_of("multi_group").find("nan") != std::string::npos);

  // the singleton Idle group flags all ten of its columns
  for (const auto& l : ls)
    if (l.find("Idle") != std::string::npos) REQUIRE(flags(l) == 10);
}

TEST_CASE("CSV round-trips losslessly including awkward doubles") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> d(0, 2000);
  ReportSummaries m;
  for (Kpi k : {Kpi::E2E, Kpi::Idle, Kpi::Communication, Kpi::Computation}) {
    for (auto v : {DeploymentVariant::InProcess, DeploymentVariant::SingleGroup,
                   DeploymentVariant::MultiGroup}) {
      StatsSummary s;
      s.mean = d(rng);
      s.std_dev = d(rng);
      s.skew = d(rng) / 100 - 10;
      s.kurtosis = d(rng) / 100 - 10;
      s.min = 1.0 / 3.0 * d(rng);
      s.q25 = d(rng);
      s.q50 = d(rng);
      s.q75 = d(rng);
      s.p99 = d(rng) * (1 + 1e-15);
      s.max = d(rng);
      s.n = static_cast<std::size_t>(rng() % 100000);
      m[{k, v}] = s;
    }
  }
  // one entry with undefined skew/kurtosis
  auto& odd = m[{Kpi::E2E, DeploymentVariant::InProcess}];
  odd.skew.reset();
  odd.kurtosis.reset();

  auto parsed = parse_report_csv(render_report_csv(m));
  REQUIRE(parsed == m);
  REQUIRE(parsed.size() == 12);
}

TEST_CASE("report rejects empty input and malformed CSV") {
  REQUIRE_THROWS_AS(render_report_csv({}), std::invalid_argument);
  REQUIRE_THROWS_AS(render_report_text({}), std::invalid_argument);
  REQUIRE_THROWS_AS(parse_report_csv("not,a,header\n"), std::runtime_error);
  REQUIRE_THROWS_AS(parse_report_csv(std::string(kReportCsvHeader) + "\nE2E,in_process,1\n"),
                    std::runtime_error);
  REQUIRE_THROWS_AS(parse_report_csv(std::string(kReportCsvHeader) +
                                     "\nWarp,in_process,1,1,1,1,1,1,1,1,1,1,5\n"),
                    std::runtime_error);
}

TEST_CASE("histogram CSV round-trips bins exactly") {
  std::vector<double> samples;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(0, 100);
  for (int i = 0; i < 500; ++i) samples.push_back(d(rng));
  auto bins = histogram(samples, 2.5);

  auto csv = render_histogram_csv(bins);
  auto ls = lines_of(csv);
  REQUIRE(ls[0] == std::string(kHistogramCsvHeader));
  REQUIRE(ls.size() == bins.size() + 1);
  REQUIRE(parse_histogram_csv(csv) == bins);

  std::uint64_t total = 0;
  for (const auto& b : bins) total += b.count;
  REQUIRE(total == samples.size());
}

TEST_CASE("render_report returns both renderings consistently") {
  ReportSummaries m;
  m[{Kpi::E2E, DeploymentVariant::InProcess}] = make_summary(42);
  auto r = render_report(m);
  REQUIRE(r.text == render_report_text(m));
  REQUIRE(r.csv == render_report_csv(m));
}
