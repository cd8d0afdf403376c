#pragma once

// Two microbenchmarks over the same bus/transport stack as the workload
// runtime: a stop-and-wait ping-pong RTT probe and a frame-rate pipeline
// (paced or closed-loop) whose latency comes out of the trace.
//
// Both support the three deployment variants. Peers that run in a child
// process are reached through the node-host style port map; ping-side
// results cross back to the driver as a JSON file.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "chainbench/analysis.hpp"
#include "chainbench/bus.hpp"
#include "chainbench/clock.hpp"
#include "chainbench/exec.hpp"
#include "chainbench/model.hpp"
#include "chainbench/orchestrator.hpp"
#include "chainbench/process.hpp"
#include "chainbench/resource.hpp"
#include "chainbench/runtime.hpp"
#include "chainbench/stats.hpp"
#include "chainbench/trace_io.hpp"
#include "chainbench/transport.hpp"
#include "chainbench/wire.hpp"

namespace chainbench {

inline constexpr char kPingTopic[] = "/pp/ping";
inline constexpr char kPongTopic[] = "/pp/pong";
inline constexpr char kFrameTopic[] = "/rate/frame";
inline constexpr char kResultTopic[] = "/rate/out";

/// The sweep's thirteen message sizes (1 KB through 8 MB; the list skips
/// 2 KB by convention of the reference procedure).
inline const std::vector<std::uint64_t>& pingpong_sweep_sizes() {
  static const std::vector<std::uint64_t> sizes = {
      1ull << 10,  4ull << 10,  8ull << 10,  16ull << 10, 32ull << 10,
      64ull << 10, 128ull << 10, 256ull << 10, 512ull << 10,
      1ull << 20,  2ull << 20,  4ull << 20,  8ull << 20};
  return sizes;
}

struct PingPongConfig {
  std::uint64_t message_size = 0;
  QosPolicy::Reliability mode = QosPolicy::Reliability::BestEffort;
  Ns duration = 1 * kSecond;
  Ns timeout = 1 * kSecond;  // per round trip, lost when exceeded
  DeploymentVariant variant = DeploymentVariant::InProcess;
  std::string executable;             // child-backed variants re-exec this
  std::filesystem::path work_dir;     // result files for child-backed variants
  std::uint64_t seed = 1;
  Ns teardown_grace = 5 * kSecond;
};

struct PingPongResult {
  std::uint64_t sent = 0;
  std::uint64_t completed = 0;  // == packet_count
  std::uint64_t lost = 0;
  double mean_rtt_us = 0;
  bool echo_ok = true;
  std::vector<double> rtts_us;  // per completed round trip
};

namespace bench_detail {

/// Runs the echo side on an existing bus: every ping is republished verbatim.
inline void attach_pong(Bus& bus, Executor::Domain* domain) {
  bus.declare_topic(kPongTopic);
  PublisherHandle* out = bus.advertise("pong", kPongTopic);
  QosPolicy qos;
  bus.subscribe("pong", kPingTopic, "on_ping", qos, domain,
                [out](const Envelope& env) { out->publish(env.payload); });
}

/// Stop-and-wait ping driver over an existing bus. Payloads of 8 bytes or
/// more carry the round-trip id in their first 8 bytes, so late echoes of a
/// timed-out ping can never complete a newer one; smaller payloads fall back
/// to any-reply matching, which is exact whenever nothing is ever lost.
class PingDriver {
 public:
  PingDriver(Bus& bus, Executor::Domain* domain, std::uint64_t size, std::uint64_t seed)
      : size_(size) {
    bus.declare_topic(kPingTopic);
    pub_ = bus.advertise("ping", kPingTopic);
    std::mt19937_64 rng(seed);
    base_payload_.resize(size);
    for (auto& b : base_payload_) b = static_cast<std::uint8_t>(rng());
    QosPolicy qos;
    bus.subscribe("ping", kPongTopic, "on_pong", qos, domain, [this](const Envelope& env) {
      std::lock_guard lk(mutex_);
      reply_payload_ = env.payload;
      reply_t_ = now_ns();
      ++replies_;
      cv_.notify_all();
    });
  }

  PingPongResult run(Ns duration, Ns timeout) {
    PingPongResult result;
    Ns deadline = now_ns() + duration;
    std::uint64_t id = 0;
    while (now_ns() < deadline) {
      ++id;
      auto payload = std::make_shared<std::vector<std::uint8_t>>(base_payload_);
      if (size_ >= 8) detail::put_be(payload->data(), id, 8);

      std::unique_lock lk(mutex_);
      std::uint64_t replies_before = replies_;
      Ns send_ts = now_ns();
      lk.unlock();
      pub_->publish(payload);
      lk.lock();

      auto matched = [&] {
        if (replies_ == replies_before || !reply_payload_) return false;
        if (size_ < 8) return true;
        if (reply_payload_->size() < 8) return false;
        if (detail::get_be(reply_payload_->data(), 8) != id) {
          replies_before = replies_;  // stale echo of a lost ping: keep waiting
          return false;
        }
        return true;
      };
      bool got = cv_.wait_until(
          lk, std::chrono::steady_clock::time_point(std::chrono::nanoseconds(send_ts + timeout)),
          matched);
      ++result.sent;
      if (got) {
        ++result.completed;
        result.rtts_us.push_back(ns_to_us(reply_t_ - send_ts));
        if (*reply_payload_ != *payload) result.echo_ok = false;
      } else {
        ++result.lost;
      }
    }
    double sum = 0;
    for (double r : result.rtts_us) sum += r;
    result.mean_rtt_us = result.rtts_us.empty() ? 0 : sum / double(result.rtts_us.size());
    return result;
  }

 private:
  std::uint64_t size_;
  PublisherHandle* pub_ = nullptr;
  std::vector<std::uint8_t> base_payload_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::shared_ptr<const std::vector<std::uint8_t>> reply_payload_;
  Ns reply_t_ = 0;
  std::uint64_t replies_ = 0;
};

inline nlohmann::json pingpong_result_json(const PingPongResult& r) {
  nlohmann::json j;
  j["sent"] = r.sent;
  j["completed"] = r.completed;
  j["lost"] = r.lost;
  j["mean_rtt_us"] = r.mean_rtt_us;
  j["echo_ok"] = r.echo_ok;
  j["rtts_us"] = r.rtts_us;
  return j;
}

inline PingPongResult pingpong_result_from_json(const nlohmann::json& j) {
  PingPongResult r;
  r.sent = j.at("sent").get<std::uint64_t>();
  r.completed = j.at("completed").get<std::uint64_t>();
  r.lost = j.at("lost").get<std::uint64_t>();
  r.mean_rtt_us = j.at("mean_rtt_us").get<double>();
  r.echo_ok = j.at("echo_ok").get<bool>();
  r.rtts_us = j.at("rtts_us").get<std::vector<double>>();
  return r;
}

/// Both peers on one local bus; used by the in_process variant and inside
/// the single_group child.
inline PingPongResult pingpong_local(const PingPongConfig& cfg) {
  Executor executor(2);
  TraceRecorder recorder("pingpong");
  recorder.set_enabled(false);  // RTTs are measured directly; no trace needed
  Bus bus(executor, recorder);
  attach_pong(bus, executor.domain());
  PingDriver ping(bus, executor.domain(), cfg.message_size, cfg.seed);
  auto result = ping.run(cfg.duration, cfg.timeout);
  executor.stop();
  return result;
}

inline std::filesystem::path pingpong_result_path(const std::filesystem::path& dir,
                                                  const std::string& tag) {
  return dir / ("pingpong." + tag + ".json");
}

}  // namespace bench_detail

// node-host style child entry points, dispatched by the CLI's --role flag

struct BenchPeerArgs {
  std::string role;       // "pp-pong" | "pp-ping" | "pp-pair"
  std::string ports;      // format_ports map with groups "ping"/"pong"
  std::uint64_t size = 0;
  QosPolicy::Reliability mode = QosPolicy::Reliability::BestEffort;
  Ns duration = 1 * kSecond;
  Ns timeout = 1 * kSecond;
  std::uint64_t seed = 1;
  std::string result_path;  // pp-ping / pp-pair write their result here
};

namespace bench_detail {

inline volatile sig_atomic_t g_bench_stop = 0;
inline void bench_signal(int) { g_bench_stop = 1; }

inline void install_bench_signals() {
  g_bench_stop = 0;
  struct sigaction sa {};
  sa.sa_handler = bench_signal;
  sigaction(SIGTERM, &sa, nullptr);
  sigaction(SIGINT, &sa, nullptr);
}

}  // namespace bench_detail

/// Echo peer process: serves until SIGTERM.
inline int pingpong_pong_main(const BenchPeerArgs& args) {
  try {
    bench_detail::install_bench_signals();
    auto ports = parse_ports(args.ports);
    Executor executor(2);
    TraceRecorder recorder("pong");
    recorder.set_enabled(false);
    Bus bus(executor, recorder);
    TransportHub hub(bus);
    bench_detail::attach_pong(bus, executor.domain());
    hub.add_topic(kPingTopic);
    hub.listen_udp(ports.at("pong").udp);
    hub.listen_tcp(ports.at("pong").tcp);
    if (args.mode == QosPolicy::Reliability::Reliable)
      hub.export_topic_tcp(kPongTopic, ports.at("ping").tcp);
    else
      hub.export_topic_udp(kPongTopic, ports.at("ping").udp);
    while (!bench_detail::g_bench_stop)
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    hub.stop();
    executor.stop();
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pong: %s\n", e.what());
    return 3;
  }
}

/// Measuring peer process: pings for the configured duration, writes its
/// result JSON, exits.
inline int pingpong_ping_main(const BenchPeerArgs& args) {
  try {
    bench_detail::install_bench_signals();
    auto ports = parse_ports(args.ports);
    Executor executor(2);
    TraceRecorder recorder("ping");
    recorder.set_enabled(false);
    Bus bus(executor, recorder);
    TransportHub hub(bus);
    bench_detail::PingDriver ping(bus, executor.domain(), args.size, args.seed);
    hub.add_topic(kPongTopic);
    hub.listen_udp(ports.at("ping").udp);
    hub.listen_tcp(ports.at("ping").tcp);
    if (args.mode == QosPolicy::Reliability::Reliable)
      hub.export_topic_tcp(kPingTopic, ports.at("pong").tcp);
    else
      hub.export_topic_udp(kPingTopic, ports.at("pong").udp);

    auto result = ping.run(args.duration, args.timeout);
    hub.stop();
    executor.stop();

    std::ofstream out(args.result_path);
    out << bench_detail::pingpong_result_json(result).dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + args.result_path);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ping: %s\n", e.what());
    return 3;
  }
}

/// Both peers in one process group (single_group variant).
inline int pingpong_pair_main(const BenchPeerArgs& args) {
  try {
    bench_detail::install_bench_signals();
    PingPongConfig cfg;
    cfg.message_size = args.size;
    cfg.duration = args.duration;
    cfg.timeout = args.timeout;
    cfg.seed = args.seed;
    auto result = bench_detail::pingpong_local(cfg);
    std::ofstream out(args.result_path);
    out << bench_detail::pingpong_result_json(result).dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + args.result_path);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pingpong-pair: %s\n", e.what());
    return 3;
  }
}

namespace bench_detail {

inline int wait_for_exit(pid_t pid, Ns budget) {
  Ns deadline = now_ns() + budget;
  while (now_ns() < deadline) {
    if (auto code = try_reap(pid)) return *code;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return -1;
}

inline PingPongResult read_pingpong_result(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing ping-pong result file: " + path.string());
  nlohmann::json j;
  in >> j;
  return pingpong_result_from_json(j);
}

}  // namespace bench_detail

/// One ping-pong measurement under the configured deployment variant.
inline PingPongResult pingpong_run(const PingPongConfig& cfg) {
  if (cfg.duration <= 0) throw std::invalid_argument("ping-pong duration must be positive");
  if (cfg.variant == DeploymentVariant::InProcess) return bench_detail::pingpong_local(cfg);

  if (cfg.executable.empty())
    throw std::invalid_argument("group deployment needs cfg.executable");
  std::filesystem::create_directories(cfg.work_dir);
  std::string tag = std::to_string(::getpid()) + "-" + std::to_string(now_ns());
  auto result_path = bench_detail::pingpong_result_path(cfg.work_dir, tag);

  auto flag_args = [&](const char* role, const std::string& ports) {
    std::vector<std::string> a = {
        "--role", role,
        "--ports", ports,
        "--size", std::to_string(cfg.message_size),
        "--mode",
        cfg.mode == QosPolicy::Reliability::Reliable ? "reliable" : "best-effort",
        "--duration-ns", std::to_string(cfg.duration),
        "--timeout-ns", std::to_string(cfg.timeout),
        "--seed", std::to_string(cfg.seed),
        "--result-file", result_path.string()};
    return a;
  };

  Ns wait_budget = cfg.duration + 30 * kSecond;

  if (cfg.variant == DeploymentVariant::SingleGroup) {
    SpawnSpec sp;
    sp.executable = cfg.executable;
    sp.args = flag_args("pp-pair", "");
    pid_t pid = spawn_process(sp);
    int code = bench_detail::wait_for_exit(pid, wait_budget);
    if (code != 0) {
      terminate_group(pid, pid, cfg.teardown_grace);
      throw std::runtime_error("ping-pong pair child failed with code " + std::to_string(code));
    }
    return bench_detail::read_pingpong_result(result_path);
  }

  // multi_group: one group per peer
  std::map<std::string, GroupPorts> ports;
  std::vector<int> fds;
  for (const char* g : {"ping", "pong"}) {
    auto udp = probe_free_port(false);
    auto tcp = probe_free_port(true);
    ports[g] = {udp.port, tcp.port};
    fds.push_back(udp.fd);
    fds.push_back(tcp.fd);
  }
  for (int fd : fds) ::close(fd);
  std::string ports_arg = format_ports(ports);

  SpawnSpec pong;
  pong.executable = cfg.executable;
  pong.args = flag_args("pp-pong", ports_arg);
  pid_t pong_pid = spawn_process(pong);

  SpawnSpec ping;
  ping.executable = cfg.executable;
  ping.args = flag_args("pp-ping", ports_arg);
  pid_t ping_pid = spawn_process(ping);

  int ping_code = bench_detail::wait_for_exit(ping_pid, wait_budget);
  terminate_group(pong_pid, pong_pid, cfg.teardown_grace);
  if (ping_code != 0) {
    terminate_group(ping_pid, ping_pid, cfg.teardown_grace);
    throw std::runtime_error("ping child failed with code " + std::to_string(ping_code));
  }
  return bench_detail::read_pingpong_result(result_path);
}

struct PingPongSweepRow {
  std::uint64_t size = 0;
  std::vector<PingPongResult> runs;
  double mean_rtt_us = 0;  // mean of the runs' means
};

inline std::vector<PingPongSweepRow> pingpong_sweep(const std::vector<std::uint64_t>& sizes,
                                                    int repeats, Ns per_size_duration,
                                                    PingPongConfig base = {},
                                                    const volatile sig_atomic_t* stop = nullptr) {
  if (sizes.empty()) throw std::invalid_argument("sweep needs at least one size");
  if (repeats < 1) throw std::invalid_argument("sweep needs at least one repeat");
  std::vector<PingPongSweepRow> rows;
  for (std::uint64_t size : sizes) {
    if (stop && *stop) break;
    PingPongSweepRow row;
    row.size = size;
    double sum = 0;
    for (int r = 0; r < repeats; ++r) {
      PingPongConfig cfg = base;
      cfg.message_size = size;
      cfg.duration = per_size_duration;
      cfg.seed = base.seed + static_cast<std::uint64_t>(r);
      row.runs.push_back(pingpong_run(cfg));
      sum += row.runs.back().mean_rtt_us;
    }
    row.mean_rtt_us = sum / repeats;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// frame-rate benchmark
// ---------------------------------------------------------------------------

struct RateConfig {
  double fps = 10;               // ignored when max_throughput
  bool max_throughput = false;
  int runs = 10;
  int iterations = 5;            // frames per run; sets duration unless overridden
  Ns run_duration = 0;           // 0 = iterations/fps (or 3 s for max_throughput)
  std::uint64_t payload = 920'000;  // frame bytes
  ComputeModel worker_compute = ComputeModel::fixed(5 * kMillisecond);
  DeploymentVariant variant = DeploymentVariant::InProcess;
  std::string executable;
  std::filesystem::path work_dir = ".";
  std::uint64_t seed = 1;
  Ns teardown_grace = 5 * kSecond;
};

struct RateRunStats {
  std::vector<double> latencies_ms;  // per frame, publish to worker output
  std::uint64_t published = 0;
  std::uint64_t dropped = 0;  // frames without a completed path
  double mean_cpu_percent = 0;
};

struct RateResult {
  double mean_latency_ms = 0;
  double mean_jitter_ms = 0;
  double mean_cpu_percent = 0;
  std::uint64_t published = 0;
  std::uint64_t dropped = 0;
  std::vector<RateRunStats> runs;
};

/// The playback/worker pipeline as a workload spec: playback publishes
/// frames (timer-paced, or retriggered by the worker's output when closed
/// loop), the worker computes and publishes the result.
inline WorkloadSpec rate_workload(const RateConfig& cfg) {
  WorkloadSpec spec;

  NodeSpec playback;
  playback.name = "playback";
  playback.compute = ComputeModel::fixed(0);
  if (cfg.max_throughput) {
    // closed loop: the first frame is injected by the driver, every further
    // frame fires when the previous result lands
    playback.subscriptions.push_back({kResultTopic, "on_done", QosPolicy{}});
    playback.publications.push_back({kFrameTopic, cfg.payload, "on_done"});
  } else {
    Ns period = static_cast<Ns>(1e9 / cfg.fps);
    playback.timers.push_back({period, "tick"});
    playback.publications.push_back({kFrameTopic, cfg.payload, "tick"});
  }
  spec.nodes.push_back(std::move(playback));

  NodeSpec worker;
  worker.name = "worker";
  worker.compute = cfg.worker_compute;
  worker.subscriptions.push_back({kFrameTopic, "on_frame", QosPolicy{}});
  worker.publications.push_back({kResultTopic, 1024, "on_frame"});
  spec.nodes.push_back(std::move(worker));

  spec.manifest.modules = {{"playback", {"playback"}}, {"worker", {"worker"}}};
  spec.manifest.launch_params["bench"] = "rate";
  return spec;
}

inline ChainSpec rate_chain() {
  ChainSpec chain;
  ChainHop hop;
  hop.node = "worker";
  hop.kind = HopKind::Subscription;
  hop.signature = "Frame";
  hop.topic = kFrameTopic;
  hop.output_topic = kResultTopic;
  hop.callback = "on_frame";
  chain.hops.push_back(std::move(hop));
  chain.sensor_topic = kFrameTopic;
  return chain;
}

namespace bench_detail {

inline std::uint64_t count_publishes(const TraceLog& trace, const std::string& topic) {
  std::uint64_t n = 0;
  for (const auto& ev : trace.events)
    if (ev.kind == TraceKind::Publish && ev.has_topic && ev.topic == topic) ++n;
  return n;
}

}  // namespace bench_detail

/// One run: launch the two-node pipeline under the variant, optionally kick
/// the closed loop, collect the trace, derive latency and drops.
inline RateRunStats rate_run_once(const RateConfig& cfg, int run_index) {
  Ns duration = cfg.run_duration;
  if (duration <= 0)
    duration = cfg.max_throughput ? 3 * kSecond
                                  : static_cast<Ns>(double(cfg.iterations) / cfg.fps * 1e9);

  auto spec = rate_workload(cfg);
  LaunchConfig lc;
  lc.executable = cfg.executable;
  lc.run_dir = cfg.work_dir / ("rate-" + std::to_string(::getpid()));
  lc.run_id = "rate" + std::to_string(run_index) + "-" + std::to_string(now_ns());
  lc.seed = cfg.seed + static_cast<std::uint64_t>(run_index);
  DeploymentPlan plan;
  plan.variant = cfg.variant;

  auto handle = launch(spec, plan, lc);

  if (cfg.max_throughput && cfg.variant == DeploymentVariant::InProcess) {
    // ignite the loop with frame zero
    auto* host = handle.in_process_host();
    auto* kick = host->bus().advertise("playback", kFrameTopic);
    std::vector<std::uint8_t> frame(cfg.payload);
    kick->publish(std::move(frame));
  }
  std::this_thread::sleep_for(std::chrono::nanoseconds(duration));
  handle.stop();

  auto trace = handle.merged_trace();
  auto paths = reconstruct_paths(trace, rate_chain());

  RateRunStats stats;
  stats.latencies_ms = data_age_series(paths);
  stats.published = bench_detail::count_publishes(trace, kFrameTopic);
  stats.dropped = stats.published - std::min<std::uint64_t>(stats.published,
                                                            count_complete(paths));
  if (handle.sampler()) stats.mean_cpu_percent = handle.sampler()->mean_total_cpu();
  return stats;
}

inline RateResult rate_run(const RateConfig& cfg,
                           const volatile sig_atomic_t* stop = nullptr) {
  if (cfg.runs < 1) throw std::invalid_argument("rate benchmark needs at least one run");
  if (!cfg.max_throughput && cfg.fps <= 0)
    throw std::invalid_argument("rate must be positive");
  if (cfg.max_throughput && cfg.variant != DeploymentVariant::InProcess)
    throw std::invalid_argument("closed-loop rate runs are in-process only");

  RateResult result;
  double lat_sum = 0, jit_sum = 0, cpu_sum = 0;
  std::size_t lat_n = 0, jit_n = 0;
  int done = 0;
  for (int r = 0; r < cfg.runs; ++r) {
    if (stop && *stop) break;
    auto stats = rate_run_once(cfg, r);
    ++done;
    result.published += stats.published;
    result.dropped += stats.dropped;
    cpu_sum += stats.mean_cpu_percent;
    for (double v : stats.latencies_ms) lat_sum += v;
    lat_n += stats.latencies_ms.size();
    if (stats.latencies_ms.size() >= 2) {
      jit_sum += jitter(stats.latencies_ms);
      ++jit_n;
    }
    result.runs.push_back(std::move(stats));
  }
  result.mean_latency_ms = lat_n ? lat_sum / double(lat_n) : 0;
  result.mean_jitter_ms = jit_n ? jit_sum / double(jit_n) : 0;
  result.mean_cpu_percent = done ? cpu_sum / done : 0;
  return result;
}

}  // namespace chainbench
