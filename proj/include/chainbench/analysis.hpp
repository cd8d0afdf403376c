#pragma once

// Chain path reconstruction and latency decomposition over merged traces.
//
// A path starts at one sensor publish and follows exact message identity:
// subscription hops match the upstream publish's (topic, seq); timer hops
// match the consumed (topic, seq) stamped into their start events. Timer
// hops fan out when several firings consume the same stored input, so one
// sensor input can own several paths; the data-age series averages them.
//
// Decomposition anchors every hop at its entry (dispatch start) and exit
// (the publish feeding the next subscription hop, else dispatch end; the
// final hop exits at its output publish when it has one). Communication and
// idle bridge consecutive exits to entries and compute spans entry to exit,
// so idle + communication + compute telescopes to e2e exactly in integers.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "chainbench/clock.hpp"
#include "chainbench/model.hpp"
#include "chainbench/trace_io.hpp"

namespace chainbench {

struct HopEvents {
  Ns start = 0;
  Ns end = 0;
  std::optional<Ns> publish_ts;  // exit publish, when one feeds the next hop or the output
  bool timer = false;

  bool operator==(const HopEvents&) const = default;
};

struct PathInstance {
  std::uint64_t sensor_seq = 0;
  Ns sensor_publish_ts = 0;
  std::vector<HopEvents> hop_events;
  bool complete = false;

  bool operator==(const PathInstance&) const = default;
};

struct LatencyBreakdown {
  struct Hop {
    Ns communication = 0;
    Ns idle = 0;
    Ns compute = 0;

    bool operator==(const Hop&) const = default;
  };

  Ns e2e = 0;
  Ns idle = 0;
  Ns communication = 0;
  Ns compute = 0;
  std::vector<Hop> per_hop;

  bool operator==(const LatencyBreakdown&) const = default;
};

namespace analysis_detail {

struct Dispatch {
  bool timer = false;
  Ns start = 0;
  Ns end = 0;
  bool closed = false;
  std::string topic;  // delivered (sub) or consumed (timer) message identity
  std::uint64_t seq = 0;
  bool has_input = false;

  struct Pub {
    std::string topic;
    std::uint64_t seq;
    Ns t;
  };
  std::vector<Pub> pubs;
};

struct TraceIndex {
  std::vector<Dispatch> dispatches;
  // (node, topic, seq) -> dispatches that received that message
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::vector<std::size_t>> subs;
  // (node, topic, seq) -> timer dispatches that consumed that stored input
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::vector<std::size_t>> timers;
  // sensor stimulus publishes, in trace order
  std::vector<std::pair<std::uint64_t, Ns>> sensor_publishes;
};

inline TraceIndex index_trace(const TraceLog& trace, const std::string& sensor_topic) {
  TraceIndex index;
  std::map<std::pair<int, std::string>, std::size_t> open;  // (pid, node) -> open dispatch

  for (const auto& ev : trace.events) {
    auto key = std::make_pair(ev.pid, ev.node);
    switch (ev.kind) {
      case TraceKind::SubCbStart:
      case TraceKind::TimerCbStart: {
        Dispatch d;
        d.timer = ev.kind == TraceKind::TimerCbStart;
        d.start = ev.t;
        if (ev.has_topic) {
          d.topic = ev.topic;
          d.seq = ev.seq;
          d.has_input = true;
        }
        open[key] = index.dispatches.size();
        index.dispatches.push_back(std::move(d));
        break;
      }
      case TraceKind::SubCbEnd:
      case TraceKind::TimerCbEnd: {
        auto it = open.find(key);
        if (it == open.end()) break;  // stray end, tolerate
        Dispatch& d = index.dispatches[it->second];
        bool timer_end = ev.kind == TraceKind::TimerCbEnd;
        if (d.timer == timer_end) {
          d.end = ev.t;
          d.closed = true;
          if (d.has_input) {
            auto map_key = std::make_tuple(ev.node, d.topic, d.seq);
            (d.timer ? index.timers : index.subs)[map_key].push_back(it->second);
          }
        }
        open.erase(it);
        break;
      }
      case TraceKind::Publish: {
        if (ev.topic == sensor_topic) index.sensor_publishes.emplace_back(ev.seq, ev.t);
        auto it = open.find(key);
        if (it != open.end())
          index.dispatches[it->second].pubs.push_back({ev.topic, ev.seq, ev.t});
        break;
      }
      case TraceKind::NodeReady:
        break;
    }
  }
  return index;
}

struct PathWalker {
  const ChainSpec& chain;
  const TraceIndex& index;
  std::vector<PathInstance>* out;

  // extends the partial path from hop position `i` fed by identity (topic, seq)
  void walk(PathInstance path, std::size_t i, const std::string& topic, std::uint64_t seq) {
    if (i == chain.hops.size()) {
      path.complete = true;
      out->push_back(std::move(path));
      return;
    }
    const ChainHop& hop = chain.hops[i];
    const auto key = std::make_tuple(hop.node, topic, seq);
    const auto& table = hop.kind == HopKind::Timer ? index.timers : index.subs;
    auto it = table.find(key);
    if (it == table.end()) {
      out->push_back(std::move(path));  // truncated: evicted, missed, or run ended
      return;
    }
    for (std::size_t d_idx : it->second) {
      const Dispatch& d = index.dispatches[d_idx];
      PathInstance branch = path;
      HopEvents he;
      he.start = d.start;
      he.end = d.end;
      he.timer = d.timer;

      bool last = i + 1 == chain.hops.size();
      if (last) {
        branch.hop_events.push_back(he);
        if (hop.output_topic.empty()) {
          branch.complete = true;
        } else {
          for (const auto& p : d.pubs) {
            if (p.topic != hop.output_topic) continue;
            branch.hop_events.back().publish_ts = p.t;  // first output publish ends the path
            branch.complete = true;
            break;
          }
        }
        out->push_back(std::move(branch));
        continue;
      }

      const ChainHop& next = chain.hops[i + 1];
      if (next.kind == HopKind::Timer) {
        // the stored input's identity carries to the consuming firing
        branch.hop_events.push_back(he);
        walk(std::move(branch), i + 1, topic, seq);
      } else {
        bool advanced = false;
        for (const auto& p : d.pubs) {
          if (p.topic != next.topic) continue;
          PathInstance fork = branch;
          HopEvents with_pub = he;
          with_pub.publish_ts = p.t;
          fork.hop_events.push_back(with_pub);
          walk(std::move(fork), i + 1, p.topic, p.seq);
          advanced = true;
        }
        if (!advanced) {
          branch.hop_events.push_back(he);
          out->push_back(std::move(branch));  // produced nothing downstream
        }
      }
    }
  }
};

}  // namespace analysis_detail

inline std::vector<PathInstance> reconstruct_paths(const TraceLog& trace,
                                                   const ChainSpec& chain) {
  if (!chain.resolved()) throw std::invalid_argument("chain is not resolved");
  if (chain.hops.empty()) throw std::invalid_argument("chain has no hops");

  auto index = analysis_detail::index_trace(trace, chain.sensor_topic);
  if (index.sensor_publishes.empty())
    throw std::runtime_error("trace holds no publishes on sensor topic '" +
                             chain.sensor_topic + "'");

  std::vector<PathInstance> paths;
  analysis_detail::PathWalker walker{chain, index, &paths};
  for (const auto& [seq, t] : index.sensor_publishes) {
    PathInstance root;
    root.sensor_seq = seq;
    root.sensor_publish_ts = t;
    walker.walk(std::move(root), 0, chain.sensor_topic, seq);
  }
  return paths;
}

inline LatencyBreakdown decompose(const PathInstance& path) {
  if (!path.complete) throw std::invalid_argument("cannot decompose an incomplete path");

  LatencyBreakdown out;
  Ns prev_exit = path.sensor_publish_ts;
  Ns prev_end = 0;
  for (const auto& hop : path.hop_events) {
    LatencyBreakdown::Hop h;
    Ns exit = hop.publish_ts.value_or(hop.end);
    if (hop.timer) {
      h.idle = hop.start - prev_end;
    } else {
      h.communication = hop.start - prev_exit;
    }
    h.compute = exit - hop.start;
    out.per_hop.push_back(h);
    out.idle += h.idle;
    out.communication += h.communication;
    out.compute += h.compute;
    prev_exit = exit;
    prev_end = hop.end;
  }
  out.e2e = prev_exit - path.sensor_publish_ts;
  return out;
}

enum class Kpi { E2E, Idle, Communication, Computation };

inline const char* kpi_name(Kpi kpi) {
  switch (kpi) {
    case Kpi::E2E: return "E2E";
    case Kpi::Idle: return "Idle";
    case Kpi::Communication: return "Communication";
    case Kpi::Computation: return "Computation";
  }
  return "?";
}

/// Per sensor input: the mean of the KPI over that input's complete paths, in ms.
inline std::vector<double> kpi_series_ms(const std::vector<PathInstance>& paths, Kpi kpi) {
  std::map<std::uint64_t, std::pair<long double, std::size_t>> by_seq;
  for (const auto& path : paths) {
    if (!path.complete) continue;
    auto breakdown = decompose(path);
    Ns value = 0;
    switch (kpi) {
      case Kpi::E2E: value = breakdown.e2e; break;
      case Kpi::Idle: value = breakdown.idle; break;
      case Kpi::Communication: value = breakdown.communication; break;
      case Kpi::Computation: value = breakdown.compute; break;
    }
    auto& [sum, count] = by_seq[path.sensor_seq];
    sum += static_cast<long double>(value);
    ++count;
  }
  std::vector<double> series;
  series.reserve(by_seq.size());
  for (const auto& [seq, acc] : by_seq)
    series.push_back(static_cast<double>(acc.first / static_cast<long double>(acc.second) / 1e6L));
  return series;
}

inline std::vector<double> data_age_series(const std::vector<PathInstance>& paths) {
  return kpi_series_ms(paths, Kpi::E2E);
}

inline std::size_t count_complete(const std::vector<PathInstance>& paths) {
  std::size_t n = 0;
  for (const auto& p : paths) n += p.complete ? 1 : 0;
  return n;
}

}  // namespace chainbench
