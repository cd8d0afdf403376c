#pragma once

// On-disk trace format:
//
//   #chainbench-trace v1 run=<run_id> clock=monotonic
//   v1 <t_ns> <pid> <node> <kind> [topic seq]
//
// One event per line, kinds: publish, sub_cb_start, sub_cb_end,
// timer_cb_start (topic/seq = consumed input, may be absent), timer_cb_end,
// node_ready. Every process writes its own file <run_id>.<pid>.trace;
// analysis merges the files of one run sorted by t with ties broken by
// (pid, emission order), which the stable per-file line order encodes.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chainbench/clock.hpp"

namespace chainbench {

enum class TraceKind : std::uint8_t {
  Publish,
  SubCbStart,
  SubCbEnd,
  TimerCbStart,
  TimerCbEnd,
  NodeReady,
};

inline const char* trace_kind_name(TraceKind k) {
  switch (k) {
    case TraceKind::Publish: return "publish";
    case TraceKind::SubCbStart: return "sub_cb_start";
    case TraceKind::SubCbEnd: return "sub_cb_end";
    case TraceKind::TimerCbStart: return "timer_cb_start";
    case TraceKind::TimerCbEnd: return "timer_cb_end";
    case TraceKind::NodeReady: return "node_ready";
  }
  return "?";
}

inline std::optional<TraceKind> parse_trace_kind(std::string_view s) {
  if (s == "publish") return TraceKind::Publish;
  if (s == "sub_cb_start") return TraceKind::SubCbStart;
  if (s == "sub_cb_end") return TraceKind::SubCbEnd;
  if (s == "timer_cb_start") return TraceKind::TimerCbStart;
  if (s == "timer_cb_end") return TraceKind::TimerCbEnd;
  if (s == "node_ready") return TraceKind::NodeReady;
  return std::nullopt;
}

struct TraceEvent {
  Ns t = 0;
  std::int64_t pid = 0;
  std::string node;
  TraceKind kind = TraceKind::Publish;
  std::string topic;
  std::uint64_t seq = 0;
  bool has_topic = false;

  bool operator==(const TraceEvent&) const = default;
};

struct TraceLog {
  std::string run_id;
  std::vector<TraceEvent> events;
  std::uint64_t dropped_count = 0;
  std::vector<std::string> warnings;  // malformed input lines, by number
};

inline std::size_t write_trace(std::ostream& out, const TraceLog& log) {
  out << "#chainbench-trace v1 run=" << log.run_id << " clock=monotonic\n";
  for (const auto& e : log.events) {
    out << "v1 " << e.t << ' ' << e.pid << ' ' << e.node << ' ' << trace_kind_name(e.kind);
    if (e.has_topic) out << ' ' << e.topic << ' ' << e.seq;
    out << '\n';
  }
  if (log.dropped_count) out << "# dropped " << log.dropped_count << "\n";
  return log.events.size();
}

inline std::size_t write_trace_file(const std::filesystem::path& path, const TraceLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open trace file for writing: " + path.string());
  auto n = write_trace(out, log);
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
  return n;
}

inline TraceLog parse_trace(std::istream& in, const std::string& origin = "<stream>") {
  TraceLog log;
  std::string line;
  int lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hdr(line);
      std::string tag;
      hdr >> tag;
      if (tag == "#chainbench-trace") {
        std::string version, run, clock;
        hdr >> version >> run >> clock;
        if (version != "v1")
          throw std::runtime_error(origin + ": unsupported trace version '" + version + "'");
        if (run.rfind("run=", 0) == 0) log.run_id = run.substr(4);
        saw_header = true;
      } else if (tag == "#") {
        std::string key;
        std::uint64_t value = 0;
        if (hdr >> key >> value && key == "dropped") log.dropped_count += value;
      }
      continue;
    }
    if (!saw_header)
      throw std::runtime_error(origin + ": missing #chainbench-trace header");

    std::istringstream ls(line);
    std::string version, node, kind_str;
    TraceEvent e;
    if (!(ls >> version >> e.t >> e.pid >> node >> kind_str) || version != "v1") {
      log.warnings.push_back(origin + ":" + std::to_string(lineno) + ": malformed event line");
      continue;
    }
    auto kind = parse_trace_kind(kind_str);
    if (!kind) {
      log.warnings.push_back(origin + ":" + std::to_string(lineno) + ": unknown event kind '" +
                             kind_str + "'");
      continue;
    }
    e.node = std::move(node);
    e.kind = *kind;
    std::string topic;
    if (ls >> topic) {
      std::uint64_t seq;
      if (!(ls >> seq)) {
        log.warnings.push_back(origin + ":" + std::to_string(lineno) +
                               ": topic without sequence number");
        continue;
      }
      e.topic = std::move(topic);
      e.seq = seq;
      e.has_topic = true;
    }
    log.events.push_back(std::move(e));
  }
  return log;
}

inline TraceLog load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
  return parse_trace(in, path.filename().string());
}

inline std::filesystem::path trace_file_path(const std::filesystem::path& dir,
                                             const std::string& run_id, std::int64_t pid) {
  return dir / (run_id + "." + std::to_string(pid) + ".trace");
}

inline std::vector<std::filesystem::path> find_trace_files(const std::filesystem::path& dir,
                                                           const std::string& run_id) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::exists(dir)) return out;
  std::string prefix = run_id + ".";
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && name.size() > 6 &&
        name.compare(name.size() - 6, 6, ".trace") == 0)
      out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Merges per-process logs of one run. Sort key is (t, pid); equal keys keep
/// their source-file order, which preserves per-producer emission order.
inline TraceLog merge_traces(std::vector<TraceLog> logs) {
  TraceLog merged;
  if (logs.empty()) return merged;
  merged.run_id = logs.front().run_id;
  std::size_t total = 0;
  for (auto& log : logs) {
    if (!log.run_id.empty() && log.run_id != merged.run_id)
      merged.warnings.push_back("merging traces from different runs: " + merged.run_id +
                                " vs " + log.run_id);
    merged.dropped_count += log.dropped_count;
    for (auto& w : log.warnings) merged.warnings.push_back(std::move(w));
    total += log.events.size();
  }
  merged.events.reserve(total);
  for (auto& log : logs)
    for (auto& e : log.events) merged.events.push_back(std::move(e));
  std::stable_sort(merged.events.begin(), merged.events.end(),
                   [](const TraceEvent& a, const TraceEvent& b) {
                     if (a.t != b.t) return a.t < b.t;
                     return a.pid < b.pid;
                   });
  return merged;
}

inline const char* trace_dir_env() { return "CHAINBENCH_TRACE_DIR"; }

}  // namespace chainbench
