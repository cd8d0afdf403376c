// chainbench CLI: run workloads under deployment variants, benchmark the
// transport, analyze traces into per-KPI statistics, render reports.
//
// The same binary doubles as the child-process entry point: any invocation
// carrying --role dispatches to the matching host loop instead of the user
// commands.

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chainbench/analysis.hpp"
#include "chainbench/bench.hpp"
#include "chainbench/orchestrator.hpp"
#include "chainbench/preset.hpp"
#include "chainbench/report.hpp"
#include "chainbench/spec_parse.hpp"
#include "chainbench/stats.hpp"
#include "chainbench/wire.hpp"

using namespace chainbench;

namespace {

volatile sig_atomic_t g_interrupt = 0;
void on_interrupt(int) { g_interrupt = 1; }

void install_interrupt() {
  struct sigaction sa {};
  sa.sa_handler = on_interrupt;
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
}

std::string self_executable(const char* argv0) {
  char buf[4096];
  ssize_t n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
  if (n > 0) {
    buf[n] = '\0';
    return buf;
  }
  return argv0;
}

std::uint64_t parse_size_text(std::string text) {
  for (auto& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::uint64_t mult = 1;
  auto strip = [&](const std::string& suffix, std::uint64_t m) {
    if (text.size() > suffix.size() && text.ends_with(suffix)) {
      text.resize(text.size() - suffix.size());
      mult = m;
      return true;
    }
    return false;
  };
  strip("kb", 1024) || strip("mb", 1024 * 1024) || strip("gb", 1024ull * 1024 * 1024) ||
      strip("k", 1024) || strip("m", 1024 * 1024) || strip("g", 1024ull * 1024 * 1024) ||
      strip("b", 1);
  std::size_t used = 0;
  std::uint64_t value = std::stoull(text, &used);
  if (used != text.size()) throw std::invalid_argument("bad size: " + text);
  return value * mult;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

/// Sleeps the duration in slices; false when the interrupt flag fired.
bool sliced_wait(Ns duration) {
  Ns deadline = now_ns() + duration;
  while (now_ns() < deadline) {
    if (g_interrupt) return false;
    Ns rest = deadline - now_ns();
    std::this_thread::sleep_for(
        std::chrono::nanoseconds(std::min<Ns>(rest, 10 * kMillisecond)));
  }
  return true;
}

std::string hash_hex(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

std::vector<DeploymentVariant> parse_deployments(const std::string& text) {
  if (text == "all")
    return {DeploymentVariant::InProcess, DeploymentVariant::SingleGroup,
            DeploymentVariant::MultiGroup};
  auto v = parse_variant(text);
  if (!v) throw std::invalid_argument("unknown deployment '" + text + "'");
  return {*v};
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunOpts {
  std::string spec_file;
  std::string chain_file;
  std::string preset;
  double scale = 1.0;
  std::string deployment = "in-process";
  int runs = 3;
  double duration_s = 5.0;
  int retry_budget = 5;
  std::uint64_t seed = 1;
  std::string out = "out";
  bool paper_scale = false;
  std::string self;
};

void write_resources_csv(const std::filesystem::path& path,
                         const std::vector<ResourceSample>& samples) {
  std::ostringstream out;
  out << "t_ns,tag,pid,cpu_percent,rss_bytes\n";
  for (const auto& s : samples)
    for (const auto& p : s.processes)
      out << s.t << ',' << p.tag << ',' << p.pid << ',' << p.cpu_percent << ','
          << p.rss_bytes << '\n';
  write_file(path, out.str());
}

int cmd_run(const RunOpts& opts) {
  if (opts.runs < 1) {
    std::cerr << "chainbench run: --runs must be at least 1\n";
    return 2;
  }

  WorkloadSpec spec;
  ChainSpec chain;
  if (!opts.preset.empty()) {
    if (opts.preset != "mini-autoware") {
      std::cerr << "chainbench run: unknown preset '" << opts.preset
                << "' (available: mini-autoware)\n";
      return 2;
    }
    PresetConfig pc;
    pc.scale = opts.scale;
    auto built = build_mini_autoware(pc);
    spec = std::move(built.workload);
    chain = std::move(built.chain);
  } else if (!opts.spec_file.empty()) {
    spec = parse_workload_spec(read_file(opts.spec_file));
    if (!opts.chain_file.empty()) chain = parse_chain_spec(read_file(opts.chain_file));
  } else {
    std::cerr << "chainbench run: need --preset or --spec\n";
    return 2;
  }

  auto report = chain.hops.empty() ? validate_graph(spec) : validate_graph(spec, chain);
  if (!report.valid()) {
    std::cerr << "chainbench run: workload does not validate:\n" << report.to_string();
    return 2;
  }
  if (!chain.hops.empty()) chain = resolve_chain(spec, chain);

  auto variants = parse_deployments(opts.deployment);
  std::filesystem::path out_dir(opts.out);
  std::filesystem::create_directories(out_dir);

  std::string spec_text = render_workload_spec(spec);
  write_file(out_dir / "workload.spec", spec_text);
  std::string spec_hash = hash_hex(spec_text);
  if (!chain.hops.empty()) write_file(out_dir / "chain.spec", render_chain_spec(chain));

  Ns duration = static_cast<Ns>(opts.duration_s * 1e9);
  std::uint64_t run_seq = 0;
  for (auto variant : variants) {
    int accepted = 0;
    int attempts = 0;
    int budget = opts.runs + opts.retry_budget;
    while (accepted < opts.runs) {
      if (g_interrupt) {
        std::cerr << "chainbench run: interrupted\n";
        return 3;
      }
      if (attempts >= budget) {
        std::cerr << "chainbench run: variant " << variant_name(variant) << " produced only "
                  << accepted << "/" << opts.runs << " valid runs within the retry budget\n";
        return 3;
      }
      char idx[16];
      std::snprintf(idx, sizeof idx, "r%02d", attempts);
      ++attempts;
      std::string run_id = std::string(variant_name(variant)) + "-" + idx;

      nlohmann::json rec;
      rec["run_id"] = run_id;
      rec["variant"] = variant_name(variant);
      rec["spec_file"] = "workload.spec";
      rec["chain_file"] = chain.hops.empty() ? "" : "chain.spec";
      rec["spec_hash"] = spec_hash;
      rec["duration_ns"] = duration;
      rec["valid"] = false;
      rec["reason"] = "";
      rec["trace_files"] = nlohmann::json::array();
      rec["warnings"] = nlohmann::json::array();

      try {
        LaunchConfig lc;
        lc.executable = opts.self;
        lc.run_dir = out_dir;
        lc.run_id = run_id;
        lc.seed = opts.seed + run_seq++;
        DeploymentPlan plan;
        plan.variant = variant;

        auto handle = launch(spec, plan, lc);
        rec["launch_ts"] = handle.launch_ts();
        for (const auto& w : handle.warnings()) rec["warnings"].push_back(w);

        bool full = sliced_wait(duration);
        auto teardown = handle.stop();
        rec["stop_ts"] = now_ns();
        rec["teardown_clean"] = teardown.clean;
        rec["orphans"] = teardown.orphans;

        if (handle.sampler()) {
          auto res_file = run_id + ".resources.csv";
          write_resources_csv(out_dir / res_file, handle.sampler()->samples());
          rec["resources_file"] = res_file;
        }

        auto trace = handle.merged_trace();
        for (const auto& f : handle.trace_files())
          rec["trace_files"].push_back(f.filename().string());

        auto ramp = measure_rampup(trace, spec, handle.launch_ts());
        rec["rampup_ns"] = ramp.duration;
        rec["rampup_complete"] = ramp.complete;
        rec["rampup_missing"] = ramp.missing;

        std::size_t complete_paths = 0;
        if (!chain.hops.empty())
          complete_paths = count_complete(reconstruct_paths(trace, chain));
        rec["complete_paths"] = complete_paths;

        std::string reason;
        if (!full)
          reason = "interrupted";
        else if (!ramp.complete)
          reason = "ramp-up incomplete";
        else if (!teardown.orphan_free())
          reason = "orphaned process groups";
        else if (!chain.hops.empty() && complete_paths == 0)
          reason = "no complete chain paths";
        rec["valid"] = reason.empty();
        rec["reason"] = reason;
      } catch (const std::runtime_error& e) {
        rec["reason"] = e.what();
      }

      write_file(out_dir / (run_id + ".record.json"), rec.dump(2) + "\n");
      bool valid = rec["valid"].get<bool>();
      if (valid) ++accepted;
      std::cout << run_id << ": " << (valid ? "valid" : ("invalid (" + rec["reason"].get<std::string>() + ")"))
                << "\n";
      if (g_interrupt) {
        std::cerr << "chainbench run: interrupted\n";
        return 3;
      }
    }
  }
  std::cout << "recorded " << opts.runs << " valid run(s) per variant under " << opts.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeOpts {
  std::string in = "out";
  std::string out;
};

int cmd_analyze(AnalyzeOpts opts) {
  if (opts.out.empty()) opts.out = opts.in;
  std::filesystem::path in_dir(opts.in);
  std::filesystem::path out_dir(opts.out);
  if (!std::filesystem::is_directory(in_dir)) {
    std::cerr << "chainbench analyze: " << opts.in << " is not a directory\n";
    return 2;
  }

  std::vector<nlohmann::json> records;
  for (const auto& entry : std::filesystem::directory_iterator(in_dir)) {
    auto name = entry.path().filename().string();
    if (!name.ends_with(".record.json")) continue;
    auto rec = nlohmann::json::parse(read_file(entry.path()));
    if (rec.value("valid", false)) records.push_back(std::move(rec));
  }
  if (records.empty()) {
    std::cerr << "chainbench analyze: no valid run records under " << opts.in
              << " (run `chainbench run` first)\n";
    return 2;
  }
  std::sort(records.begin(), records.end(),
            [](const nlohmann::json& a, const nlohmann::json& b) {
              return a["run_id"].get<std::string>() < b["run_id"].get<std::string>();
            });

  auto spec = parse_workload_spec(read_file(in_dir / records[0]["spec_file"].get<std::string>()));
  auto chain_file = records[0]["chain_file"].get<std::string>();
  if (chain_file.empty()) {
    std::cerr << "chainbench analyze: the recorded runs carry no chain; data-age analysis "
                 "needs one\n";
    return 2;
  }
  auto chain = resolve_chain(spec, parse_chain_spec(read_file(in_dir / chain_file)));

  std::map<std::pair<Kpi, DeploymentVariant>, std::vector<double>> pooled;
  std::map<DeploymentVariant, std::size_t> run_counts;
  for (const auto& rec : records) {
    auto variant = parse_variant(rec["variant"].get<std::string>());
    if (!variant) {
      std::cerr << "chainbench analyze: record " << rec["run_id"] << " has an unknown variant\n";
      return 2;
    }
    std::vector<TraceLog> logs;
    for (const auto& f : rec["trace_files"]) {
      auto path = in_dir / f.get<std::string>();
      if (!std::filesystem::exists(path)) {
        std::cerr << "chainbench analyze: missing trace file " << path.string() << "\n";
        return 2;
      }
      logs.push_back(load_trace(path));
    }
    if (logs.empty()) {
      std::cerr << "chainbench analyze: record " << rec["run_id"] << " lists no trace files\n";
      return 2;
    }
    auto paths = reconstruct_paths(merge_traces(std::move(logs)), chain);
    for (Kpi kpi : {Kpi::E2E, Kpi::Idle, Kpi::Communication, Kpi::Computation}) {
      auto series = kpi_series_ms(paths, kpi);
      auto& pool = pooled[{kpi, *variant}];
      pool.insert(pool.end(), series.begin(), series.end());
    }
    ++run_counts[*variant];
  }

  for (const auto& [variant, n] : run_counts) {
    if (pooled[{Kpi::E2E, variant}].empty()) {
      std::cerr << "chainbench analyze: no data-age samples for variant "
                << variant_name(variant) << " across " << n << " run(s)\n";
      return 2;
    }
  }

  ReportSummaries summaries;
  for (const auto& [key, samples] : pooled)
    if (!samples.empty()) summaries[key] = summarize(samples);

  auto rendered = render_report(summaries);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "stats.csv", rendered.csv);
  write_file(out_dir / "report.txt", rendered.text);

  for (const auto& [variant, n] : run_counts) {
    const auto& series = pooled[{Kpi::E2E, variant}];
    auto [lo, hi] = std::minmax_element(series.begin(), series.end());
    double width = (*hi - *lo) / 20.0;
    if (width <= 0) width = 1.0;
    write_file(out_dir / (std::string("hist_e2e_") + variant_name(variant) + ".csv"),
               render_histogram_csv(histogram(series, width)));
  }

  std::cout << rendered.text << "\n";
  for (const auto& [variant, n] : run_counts)
    std::cout << variant_name(variant) << ": " << pooled[{Kpi::E2E, variant}].size()
              << " data-age samples from " << n << " run(s)\n";
  std::cout << "report files under " << opts.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportOpts {
  std::string stats;
  std::string out;
};

int cmd_report(const ReportOpts& opts) {
  auto summaries = parse_report_csv(read_file(opts.stats));
  auto text = render_report_text(summaries);
  std::cout << text;
  if (!opts.out.empty()) {
    std::filesystem::create_directories(opts.out);
    write_file(std::filesystem::path(opts.out) / "report.txt", text);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bench pingpong
// ---------------------------------------------------------------------------

struct PpOpts {
  std::string size_text;
  bool sweep = false;
  std::string mode = "best-effort";
  std::string deployment = "in-process";
  double duration_s = 30.0;
  double timeout_s = 1.0;
  int repeats = 3;
  std::uint64_t seed = 1;
  std::string out = "out";
  std::string self;
};

int cmd_bench_pingpong(const PpOpts& opts) {
  std::vector<std::uint64_t> sizes;
  if (opts.sweep)
    sizes = pingpong_sweep_sizes();
  else if (!opts.size_text.empty())
    sizes = {parse_size_text(opts.size_text)};
  else {
    std::cerr << "chainbench bench pingpong: need --size or --sweep\n";
    return 2;
  }
  if (opts.repeats < 1) {
    std::cerr << "chainbench bench pingpong: --repeats must be at least 1\n";
    return 2;
  }
  if (opts.mode != "best-effort" && opts.mode != "reliable") {
    std::cerr << "chainbench bench pingpong: --mode must be best-effort or reliable\n";
    return 2;
  }
  auto variants = parse_deployments(opts.deployment);
  if (variants.size() != 1) {
    std::cerr << "chainbench bench pingpong: pick one deployment per invocation\n";
    return 2;
  }

  PingPongConfig base;
  base.mode = opts.mode == "reliable" ? QosPolicy::Reliability::Reliable
                                      : QosPolicy::Reliability::BestEffort;
  base.variant = variants[0];
  base.duration = static_cast<Ns>(opts.duration_s * 1e9);
  base.timeout = static_cast<Ns>(opts.timeout_s * 1e9);
  base.executable = opts.self;
  base.work_dir = opts.out;
  base.seed = opts.seed;

  std::filesystem::create_directories(opts.out);
  std::ostringstream csv;
  csv << "size_bytes,repeat,mode,deployment,sent,completed,lost,mean_rtt_us,echo_ok\n";
  bool interrupted = false;
  for (std::uint64_t size : sizes) {
    std::uint64_t sent = 0, completed = 0, lost = 0;
    double mean_sum = 0;
    bool echo_ok = true;
    int done = 0;
    for (int r = 0; r < opts.repeats && !interrupted; ++r) {
      if (g_interrupt) {
        interrupted = true;
        break;
      }
      PingPongConfig cfg = base;
      cfg.message_size = size;
      cfg.seed = base.seed + static_cast<std::uint64_t>(r);
      auto res = pingpong_run(cfg);
      csv << size << ',' << r << ',' << opts.mode << ',' << variant_name(base.variant) << ','
          << res.sent << ',' << res.completed << ',' << res.lost << ',' << res.mean_rtt_us
          << ',' << (res.echo_ok ? 1 : 0) << '\n';
      sent += res.sent;
      completed += res.completed;
      lost += res.lost;
      mean_sum += res.mean_rtt_us;
      echo_ok = echo_ok && res.echo_ok;
      ++done;
    }
    if (done > 0) {
      double mean = mean_sum / done;
      csv << size << ",mean," << opts.mode << ',' << variant_name(base.variant) << ',' << sent
          << ',' << completed << ',' << lost << ',' << mean << ',' << (echo_ok ? 1 : 0)
          << '\n';
      std::cout << "size " << size << ": mean RTT " << mean << " us over " << done
                << " run(s), lost " << lost << "/" << sent << "\n";
    }
    if (interrupted) break;
  }
  write_file(std::filesystem::path(opts.out) / "pingpong.csv", csv.str());
  std::cout << "results in " << opts.out << "/pingpong.csv\n";
  if (interrupted) {
    std::cerr << "chainbench bench pingpong: interrupted\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bench rate
// ---------------------------------------------------------------------------

struct RateOpts {
  std::string fps_text = "10";
  int runs = 10;
  int iterations = 5;
  std::string payload_text = "920000";
  double compute_ms = 5.0;
  double run_duration_s = 0;
  std::string deployment = "in-process";
  std::uint64_t seed = 1;
  std::string out = "out";
  std::string self;
};

int cmd_bench_rate(const RateOpts& opts) {
  RateConfig cfg;
  if (opts.fps_text == "max") {
    cfg.max_throughput = true;
  } else {
    cfg.fps = std::stod(opts.fps_text);
  }
  cfg.runs = opts.runs;
  cfg.iterations = opts.iterations;
  cfg.payload = parse_size_text(opts.payload_text);
  cfg.worker_compute = ComputeModel::fixed(static_cast<Ns>(opts.compute_ms * 1e6));
  cfg.run_duration = static_cast<Ns>(opts.run_duration_s * 1e9);
  auto variants = parse_deployments(opts.deployment);
  if (variants.size() != 1) {
    std::cerr << "chainbench bench rate: pick one deployment per invocation\n";
    return 2;
  }
  cfg.variant = variants[0];
  cfg.executable = opts.self;
  cfg.work_dir = opts.out;
  cfg.seed = opts.seed;

  std::filesystem::create_directories(opts.out);
  auto result = rate_run(cfg, &g_interrupt);

  std::ostringstream csv;
  csv << "run,published,dropped,mean_latency_ms,jitter_ms,cpu_percent\n";
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    const auto& run = result.runs[r];
    double mean = 0;
    for (double v : run.latencies_ms) mean += v;
    mean = run.latencies_ms.empty() ? 0 : mean / double(run.latencies_ms.size());
    double jit = run.latencies_ms.size() >= 2 ? jitter(run.latencies_ms) : 0;
    csv << r << ',' << run.published << ',' << run.dropped << ',' << mean << ',' << jit << ','
        << run.mean_cpu_percent << '\n';
  }
  csv << "all," << result.published << ',' << result.dropped << ',' << result.mean_latency_ms
      << ',' << result.mean_jitter_ms << ',' << result.mean_cpu_percent << '\n';
  write_file(std::filesystem::path(opts.out) / "rate.csv", csv.str());

  std::cout << "rate " << opts.fps_text << " (" << variant_name(cfg.variant) << "): mean latency "
            << result.mean_latency_ms << " ms, jitter " << result.mean_jitter_ms << " ms, cpu "
            << result.mean_cpu_percent << "%, published " << result.published << ", drops "
            << result.dropped << "\n";
  std::cout << "results in " << opts.out << "/rate.csv\n";
  if (g_interrupt) {
    std::cerr << "chainbench bench rate: interrupted after " << result.runs.size()
              << " run(s)\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// hidden child roles
// ---------------------------------------------------------------------------

int role_main(int argc, char** argv) {
  CLI::App app{"chainbench child role host"};
  std::string role, spec, run_id = "run", group, variant = "single_group", ports, mode =
      "best-effort", result_file;
  std::vector<std::string> modules;
  std::uint64_t size = 0, seed = 1;
  long long duration_ns = kSecond, timeout_ns = kSecond;
  app.add_option("--role", role)->required();
  app.add_option("--spec", spec);
  app.add_option("--run-id", run_id);
  app.add_option("--group", group);
  app.add_option("--module", modules);
  app.add_option("--variant", variant);
  app.add_option("--ports", ports);
  app.add_option("--seed", seed);
  app.add_option("--size", size);
  app.add_option("--mode", mode);
  app.add_option("--duration-ns", duration_ns);
  app.add_option("--timeout-ns", timeout_ns);
  app.add_option("--result-file", result_file);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (role == "node-host") {
    NodeHostArgs args;
    args.spec_path = spec;
    args.run_id = run_id;
    args.group = group;
    args.modules = modules;
    auto v = parse_variant(variant);
    if (!v) {
      std::cerr << "node-host: unknown variant '" << variant << "'\n";
      return 2;
    }
    args.variant = *v;
    args.ports = ports;
    args.seed = seed;
    if (const char* dir = std::getenv(kTraceDirEnv)) args.trace_dir = dir;
    return node_host_main(args);
  }

  BenchPeerArgs args;
  args.role = role;
  args.ports = ports;
  args.size = size;
  args.mode = mode == "reliable" ? QosPolicy::Reliability::Reliable
                                 : QosPolicy::Reliability::BestEffort;
  args.duration = duration_ns;
  args.timeout = timeout_ns;
  args.seed = seed;
  args.result_path = result_file;
  if (role == "pp-pong") return pingpong_pong_main(args);
  if (role == "pp-ping") return pingpong_ping_main(args);
  if (role == "pp-pair") return pingpong_pair_main(args);
  std::cerr << "unknown role '" << role << "'\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i)
    if (std::string_view(argv[i]) == "--role") return role_main(argc, argv);

  install_interrupt();
  std::string self = self_executable(argv[0]);

  CLI::App app{"desk-scale pub/sub latency testbed: workload runs, transport benchmarks, "
               "trace analysis"};
  app.require_subcommand(0, 1);

  RunOpts run_opts;
  run_opts.self = self;
  auto* run = app.add_subcommand("run", "execute workload runs under deployment variants");
  run->add_option("--spec", run_opts.spec_file, "workload spec file");
  run->add_option("--chain", run_opts.chain_file, "chain spec file (used with --spec)");
  run->add_option("--preset", run_opts.preset, "built-in workload (mini-autoware)");
  run->add_option("--scale", run_opts.scale, "preset node-count scale in (0,1]")
      ->capture_default_str();
  run->add_option("--deployment", run_opts.deployment,
                  "in-process|single-group|multi-group|all")
      ->capture_default_str();
  auto* runs_opt =
      run->add_option("--runs", run_opts.runs, "valid runs per variant")->capture_default_str();
  run->add_option("--duration", run_opts.duration_s, "seconds per run")->capture_default_str();
  run->add_option("--retry-budget", run_opts.retry_budget,
                  "extra attempts allowed for invalid runs")
      ->capture_default_str();
  run->add_option("--seed", run_opts.seed, "base RNG seed")->capture_default_str();
  run->add_option("--out", run_opts.out, "output directory")->capture_default_str();
  run->add_flag("--paper-scale", run_opts.paper_scale,
                "full-scale defaults (100 valid runs per variant)");

  auto* bench = app.add_subcommand("bench", "transport microbenchmarks");
  bench->require_subcommand(0, 1);

  PpOpts pp_opts;
  pp_opts.self = self;
  auto* pp = bench->add_subcommand("pingpong", "stop-and-wait round-trip benchmark");
  auto* pp_size = pp->add_option("--size", pp_opts.size_text, "message size (e.g. 1KB, 8MB)");
  pp->add_flag("--sweep", pp_opts.sweep, "run the full 13-size sweep")->excludes(pp_size);
  pp->add_option("--mode", pp_opts.mode, "best-effort|reliable")->capture_default_str();
  pp->add_option("--deployment", pp_opts.deployment, "in-process|single-group|multi-group")
      ->capture_default_str();
  auto* pp_duration = pp->add_option("--duration", pp_opts.duration_s,
                                     "seconds per size and repeat")
                          ->capture_default_str();
  pp->add_option("--repeats", pp_opts.repeats, "runs per size")->capture_default_str();
  pp->add_option("--timeout", pp_opts.timeout_s, "round-trip timeout in seconds")
      ->capture_default_str();
  pp->add_option("--seed", pp_opts.seed, "payload RNG seed")->capture_default_str();
  pp->add_option("--out", pp_opts.out, "output directory")->capture_default_str();
  bool pp_paper = false;
  pp->add_flag("--paper-scale", pp_paper, "full-scale per-size duration (46 s: a 30 minute "
                                          "sweep over 13 sizes x 3 repeats)");

  RateOpts rate_opts;
  rate_opts.self = self;
  auto* rate = bench->add_subcommand("rate", "frame-rate pipeline benchmark");
  rate->add_option("--fps", rate_opts.fps_text, "frames per second, or 'max' for closed loop")
      ->capture_default_str();
  auto* rate_runs =
      rate->add_option("--runs", rate_opts.runs, "measurement runs")->capture_default_str();
  rate->add_option("--iterations", rate_opts.iterations, "frames per run (sets run length)")
      ->capture_default_str();
  rate->add_option("--payload", rate_opts.payload_text, "frame payload size")
      ->capture_default_str();
  rate->add_option("--compute-ms", rate_opts.compute_ms, "worker compute per frame (ms)")
      ->capture_default_str();
  rate->add_option("--run-duration", rate_opts.run_duration_s,
                   "seconds per run (overrides --iterations)")
      ->capture_default_str();
  rate->add_option("--deployment", rate_opts.deployment,
                   "in-process|single-group|multi-group")
      ->capture_default_str();
  rate->add_option("--seed", rate_opts.seed, "RNG seed")->capture_default_str();
  rate->add_option("--out", rate_opts.out, "output directory")->capture_default_str();
  bool rate_paper = false;
  rate->add_flag("--paper-scale", rate_paper, "full-scale defaults (100 runs)");

  AnalyzeOpts analyze_opts;
  auto* analyze =
      app.add_subcommand("analyze", "derive per-variant latency statistics from recorded runs");
  analyze->add_option("--in", analyze_opts.in, "directory with run records")
      ->capture_default_str();
  analyze->add_option("--out", analyze_opts.out, "report directory (default: --in)");

  ReportOpts report_opts;
  auto* report = app.add_subcommand("report", "render a statistics CSV as a text table");
  report->add_option("--stats", report_opts.stats, "stats.csv produced by analyze")->required();
  report->add_option("--out", report_opts.out, "also write report.txt here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      if (run_opts.paper_scale && runs_opt->count() == 0) run_opts.runs = 100;
      return cmd_run(run_opts);
    }
    if (pp->parsed()) {
      if (pp_paper && pp_duration->count() == 0) pp_opts.duration_s = 46.0;
      return cmd_bench_pingpong(pp_opts);
    }
    if (rate->parsed()) {
      if (rate_paper && rate_runs->count() == 0) rate_opts.runs = 100;
      return cmd_bench_rate(rate_opts);
    }
    if (bench->parsed()) {
      std::cout << bench->help();
      return 2;
    }
    if (analyze->parsed()) return cmd_analyze(analyze_opts);
    if (report->parsed()) return cmd_report(report_opts);
  } catch (const std::invalid_argument& e) {
    std::cerr << "chainbench: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "chainbench: " << e.what() << "\n";
    return 3;
  }

  std::cout << app.help();
  return 2;
}
