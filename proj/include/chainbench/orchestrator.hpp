#pragma once

// Deployment orchestration: maps a workload manifest onto process groups per
// deployment variant, wires cross-group topics over loopback transport,
// launches and tears down the groups, and measures ramp-up from traces.
//
// Children are the same executable re-invoked with --role node-host; the
// parent probes loopback ports for every group up front and passes the full
// group-to-port map down, so each child can derive its own listeners and
// exports from the shared workload spec deterministically.

#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "chainbench/clock.hpp"
#include "chainbench/model.hpp"
#include "chainbench/process.hpp"
#include "chainbench/resource.hpp"
#include "chainbench/runtime.hpp"
#include "chainbench/spec_parse.hpp"
#include "chainbench/trace_io.hpp"
#include "chainbench/transport.hpp"

namespace chainbench {

inline constexpr char kTraceDirEnv[] = "CHAINBENCH_TRACE_DIR";

struct ProcessGroupPlan {
  std::string name;
  std::vector<std::string> modules;

  bool operator==(const ProcessGroupPlan&) const = default;
};

/// in_process: no groups (driver hosts everything). single_group: one group
/// holding every module. multi_group: one group per manifest module.
inline std::vector<ProcessGroupPlan> plan_groups(const ModuleManifest& manifest,
                                                 DeploymentVariant variant) {
  std::vector<ProcessGroupPlan> groups;
  switch (variant) {
    case DeploymentVariant::InProcess:
      break;
    case DeploymentVariant::SingleGroup: {
      ProcessGroupPlan g;
      g.name = "all";
      for (const auto& [name, nodes] : manifest.modules) g.modules.push_back(name);
      groups.push_back(std::move(g));
      break;
    }
    case DeploymentVariant::MultiGroup:
      for (const auto& [name, nodes] : manifest.modules) groups.push_back({name, {name}});
      break;
  }
  return groups;
}

inline std::map<std::string, std::string> node_group_map(
    const WorkloadSpec& spec, const std::vector<ProcessGroupPlan>& groups) {
  std::map<std::string, std::string> out;
  for (const auto& g : groups) {
    for (const auto& m : g.modules) {
      const auto* members = spec.manifest.find_module(m);
      if (!members) continue;
      for (const auto& node : *members) out[node] = g.name;
    }
  }
  return out;
}

struct TopicExport {
  std::string topic;
  std::string from;
  std::string to;
  QosPolicy::Reliability mode = QosPolicy::Reliability::BestEffort;

  bool operator==(const TopicExport&) const = default;
};

/// Every (topic, publisher group, subscriber group) pair that crosses a group
/// boundary, in deterministic order. An export is reliable when any
/// subscription to the topic within the destination group asks for it.
inline std::vector<TopicExport> plan_exports(const WorkloadSpec& spec,
                                             const std::vector<ProcessGroupPlan>& groups) {
  auto group_of = node_group_map(spec, groups);
  // topic -> publishing groups / (subscribing group -> strongest reliability)
  std::map<std::string, std::set<std::string>> pubs;
  std::map<std::string, std::map<std::string, QosPolicy::Reliability>> subs;
  for (const auto& node : spec.nodes) {
    auto it = group_of.find(node.name);
    if (it == group_of.end()) continue;
    const std::string& g = it->second;
    for (const auto& p : node.publications) pubs[p.topic].insert(g);
    for (const auto& s : node.subscriptions) {
      auto& mode = subs[s.topic].try_emplace(g, QosPolicy::Reliability::BestEffort).first->second;
      if (s.qos.reliability == QosPolicy::Reliability::Reliable)
        mode = QosPolicy::Reliability::Reliable;
    }
  }
  std::vector<TopicExport> exports;
  for (const auto& [topic, from_groups] : pubs) {
    auto sit = subs.find(topic);
    if (sit == subs.end()) continue;
    for (const auto& from : from_groups)
      for (const auto& [to, mode] : sit->second)
        if (from != to) exports.push_back({topic, from, to, mode});
  }
  return exports;
}

struct GroupPorts {
  int udp = 0;
  int tcp = 0;

  bool operator==(const GroupPorts&) const = default;
};

inline std::string format_ports(const std::map<std::string, GroupPorts>& ports) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [group, p] : ports) {
    if (!first) out << ',';
    first = false;
    out << group << '=' << p.udp << ':' << p.tcp;
  }
  return out.str();
}

inline std::map<std::string, GroupPorts> parse_ports(const std::string& text) {
  std::map<std::string, GroupPorts> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    auto colon = item.find(':', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || colon == std::string::npos)
      throw std::runtime_error("bad ports entry: " + item);
    GroupPorts p;
    p.udp = std::stoi(item.substr(eq + 1, colon - eq - 1));
    p.tcp = std::stoi(item.substr(colon + 1));
    out[item.substr(0, eq)] = p;
  }
  return out;
}

struct RampupReport {
  Ns duration = 0;
  bool complete = false;
  std::vector<std::string> missing;
};

/// Ramp-up: latest node_ready timestamp minus launch start, over every node
/// the spec declares. Nodes that never became ready are listed.
inline RampupReport measure_rampup(const TraceLog& trace, const WorkloadSpec& spec,
                                   Ns launch_ts) {
  std::map<std::string, Ns> ready;
  for (const auto& ev : trace.events) {
    if (ev.kind != TraceKind::NodeReady) continue;
    auto [it, inserted] = ready.emplace(ev.node, ev.t);
    if (!inserted && ev.t < it->second) it->second = ev.t;
  }
  RampupReport report;
  report.complete = true;
  Ns latest = launch_ts;
  for (const auto& node : spec.nodes) {
    auto it = ready.find(node.name);
    if (it == ready.end()) {
      report.complete = false;
      report.missing.push_back(node.name);
      continue;
    }
    latest = std::max(latest, it->second);
  }
  report.duration = latest - launch_ts;
  return report;
}

struct LaunchConfig {
  std::string executable;             // binary re-invoked for child groups
  std::filesystem::path run_dir;      // spec + trace files live here
  std::string run_id = "run";
  std::uint64_t seed = 1;
  unsigned executor_threads = Executor::default_thread_count();
  Ns teardown_grace = 5 * kSecond;
  bool sample_resources = true;
  Ns sample_interval = 200 * kMillisecond;
};

struct ChildGroup {
  pid_t pid = 0;
  pid_t pgid = 0;
  std::string group;
  std::vector<std::string> modules;
  int exit_code = -1;
  bool forced = false;
};

struct TeardownReport {
  std::vector<ChildGroup> children;
  std::vector<std::string> orphans;  // groups still alive after escalation
  bool clean = true;                 // all exit codes 0 and no forced kills

  bool orphan_free() const { return orphans.empty(); }
};

class RunHandle {
 public:
  RunHandle(const WorkloadSpec& spec, DeploymentPlan plan, LaunchConfig cfg)
      : spec_(spec), plan_(std::move(plan)), cfg_(std::move(cfg)) {}

  RunHandle(const RunHandle&) = delete;
  RunHandle& operator=(const RunHandle&) = delete;
  RunHandle(RunHandle&&) = default;
  RunHandle& operator=(RunHandle&&) = default;

  ~RunHandle() {
    if (!torn_down_) stop();
  }

  const std::string& run_id() const { return cfg_.run_id; }
  Ns launch_ts() const { return launch_ts_; }
  const std::vector<ChildGroup>& children() const { return children_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::filesystem::path& run_dir() const { return cfg_.run_dir; }
  ResourceSampler* sampler() { return sampler_.get(); }
  NodeHost* in_process_host() { return host_.get(); }

  /// Terminates every group (in-process host included), writes this
  /// process's trace file, and reports exit codes plus an orphan check.
  TeardownReport stop() {
    TeardownReport report;
    if (torn_down_) {
      report.children = children_;
      return report;
    }
    torn_down_ = true;
    if (sampler_) sampler_->stop();

    if (host_) {
      host_->stop();
      if (recorder_)
        write_trace_file(trace_file_path(cfg_.run_dir, cfg_.run_id, ::getpid()),
                         recorder_->snapshot());
      host_.reset();
      recorder_.reset();
    }
    for (auto& child : children_) {
      auto result = terminate_group(child.pid, child.pgid, cfg_.teardown_grace);
      child.exit_code = result.exit_code;
      child.forced = result.forced;
      if (result.forced || result.exit_code != 0) report.clean = false;
    }
    for (const auto& child : children_) {
      if (group_alive(child.pgid)) {
        report.orphans.push_back(child.group);
        report.clean = false;
      }
    }
    cgroups_.clear();  // memberships released after the groups are dead
    report.children = children_;
    teardown_ = report;
    return report;
  }

  const std::optional<TeardownReport>& teardown() const { return teardown_; }

  std::vector<std::filesystem::path> trace_files() const {
    return find_trace_files(cfg_.run_dir, cfg_.run_id);
  }

  TraceLog merged_trace() const {
    auto files = trace_files();
    if (files.empty())
      throw std::runtime_error("no trace files for run " + cfg_.run_id + " under " +
                               cfg_.run_dir.string());
    std::vector<TraceLog> logs;
    for (const auto& f : files) logs.push_back(load_trace(f));
    return merge_traces(std::move(logs));
  }

 private:
  friend RunHandle launch(const WorkloadSpec&, const DeploymentPlan&, const LaunchConfig&);

  WorkloadSpec spec_;
  DeploymentPlan plan_;
  LaunchConfig cfg_;
  Ns launch_ts_ = 0;
  std::vector<ChildGroup> children_;
  std::vector<std::string> warnings_;
  std::unique_ptr<TraceRecorder> recorder_;
  std::unique_ptr<NodeHost> host_;
  std::unique_ptr<ResourceSampler> sampler_;
  std::vector<CgroupScope> cgroups_;
  std::optional<TeardownReport> teardown_;
  bool torn_down_ = false;
};

namespace orchestrator_detail {

inline std::vector<int> affinity_for(const DeploymentPlan& plan, const std::string& group) {
  auto it = plan.affinity.find(group);
  if (it != plan.affinity.end()) return it->second;
  it = plan.affinity.find("*");
  if (it != plan.affinity.end()) return it->second;
  return {};
}

}  // namespace orchestrator_detail

/// Launches the workload under the plan's deployment variant. The in_process
/// variant hosts every node inside this process; the group variants spawn
/// one child per group, each re-executing cfg.executable as a node host.
inline RunHandle launch(const WorkloadSpec& spec, const DeploymentPlan& plan,
                        const LaunchConfig& cfg) {
  auto report = validate_graph(spec);
  if (!report.valid())
    throw std::invalid_argument("workload spec invalid:\n" + report.to_string());

  std::filesystem::create_directories(cfg.run_dir);
  RunHandle handle(spec, plan, cfg);
  handle.launch_ts_ = now_ns();

  if (cfg.sample_resources) {
    handle.sampler_ = std::make_unique<ResourceSampler>(cfg.sample_interval);
  }

  auto groups = plan_groups(spec.manifest, plan.variant);
  if (groups.empty()) {
    handle.recorder_ = std::make_unique<TraceRecorder>(cfg.run_id);
    NodeHostConfig host_cfg;
    host_cfg.seed = cfg.seed;
    host_cfg.executor_threads = cfg.executor_threads;
    handle.host_ = std::make_unique<NodeHost>(spec, *handle.recorder_, host_cfg);
    handle.host_->start();
    if (handle.sampler_) {
      handle.sampler_->watch(::getpid(), "driver");
      handle.sampler_->start();
    }
    return handle;
  }

  if (cfg.executable.empty())
    throw std::invalid_argument("group deployment needs cfg.executable");

  bool want_limits = plan.isolation == IsolationLevel::ProcessGroupWithLimits;
  bool limits_ok = want_limits && CgroupScope::supported();
  if (want_limits && !limits_ok) {
    handle.warnings_.push_back(
        "resource_limits isolation unavailable on this host; degraded to plain "
        "process groups");
    std::fprintf(stderr, "chainbench: %s\n", handle.warnings_.back().c_str());
  }

  auto spec_path = cfg.run_dir / (cfg.run_id + ".workload.spec");
  {
    std::ofstream out(spec_path);
    out << render_workload_spec(spec);
    if (!out) throw std::runtime_error("cannot write " + spec_path.string());
  }

  // every group's ports probed before any spawn; fds held so the batch is
  // duplicate-free, then released just before the children bind
  std::map<std::string, GroupPorts> ports;
  std::vector<int> probe_fds;
  for (const auto& g : groups) {
    auto udp = probe_free_port(false);
    auto tcp = probe_free_port(true);
    ports[g.name] = {udp.port, tcp.port};
    probe_fds.push_back(udp.fd);
    probe_fds.push_back(tcp.fd);
  }
  for (int fd : probe_fds) ::close(fd);

  std::string ports_arg = format_ports(ports);
  for (const auto& g : groups) {
    SpawnSpec sp;
    sp.executable = cfg.executable;
    sp.args = {"--role",  "node-host",          "--spec",    spec_path.string(),
               "--run-id", cfg.run_id,          "--group",   g.name,
               "--variant", variant_name(plan.variant), "--ports", ports_arg,
               "--seed",   std::to_string(cfg.seed)};
    if (plan.variant == DeploymentVariant::MultiGroup)
      for (const auto& m : g.modules) {
        sp.args.push_back("--module");
        sp.args.push_back(m);
      }
    sp.env.emplace_back(kTraceDirEnv, cfg.run_dir.string());
    sp.affinity_cpus = orchestrator_detail::affinity_for(plan, g.name);

    pid_t pid = spawn_process(sp);
    ChildGroup child;
    child.pid = pid;
    child.pgid = pid;
    child.group = g.name;
    child.modules = g.modules;
    handle.children_.push_back(std::move(child));

    if (limits_ok) {
      CgroupScope scope(cfg.run_id + "-" + g.name);
      if (scope.active() && scope.add_pid(pid)) {
        handle.cgroups_.push_back(std::move(scope));
      } else {
        handle.warnings_.push_back("cgroup setup failed for group " + g.name +
                                   "; degraded to plain process group");
        std::fprintf(stderr, "chainbench: %s\n", handle.warnings_.back().c_str());
      }
    }
    if (handle.sampler_) handle.sampler_->watch(pid, g.name);
  }
  if (handle.sampler_) handle.sampler_->start();
  return handle;
}

// ---------------------------------------------------------------------------
// node-host role (child side)
// ---------------------------------------------------------------------------

struct NodeHostArgs {
  std::string spec_path;
  std::string run_id = "run";
  std::string group;
  std::vector<std::string> modules;  // empty = host every node
  DeploymentVariant variant = DeploymentVariant::SingleGroup;
  std::string ports;                 // format_ports output
  std::string trace_dir;             // usually from CHAINBENCH_TRACE_DIR
  std::uint64_t seed = 1;
  unsigned executor_threads = Executor::default_thread_count();
};

namespace orchestrator_detail {

inline volatile sig_atomic_t g_node_host_stop = 0;

inline void node_host_signal(int) { g_node_host_stop = 1; }

}  // namespace orchestrator_detail

/// Child entry point: hosts the group's nodes until SIGTERM/SIGINT, bridging
/// cross-group topics over loopback. Exit codes: 0 ok, 2 config, 3 runtime.
inline int node_host_main(const NodeHostArgs& args) {
  WorkloadSpec spec;
  std::map<std::string, GroupPorts> ports;
  try {
    std::ifstream in(args.spec_path);
    if (!in) throw std::runtime_error("cannot open spec file: " + args.spec_path);
    std::stringstream buf;
    buf << in.rdbuf();
    spec = parse_workload_spec(buf.str());
    auto report = validate_graph(spec);
    if (!report.valid()) throw std::runtime_error("spec invalid:\n" + report.to_string());
    ports = parse_ports(args.ports);
    if (!ports.count(args.group))
      throw std::runtime_error("own group '" + args.group + "' missing from port map");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "node-host %s: %s\n", args.group.c_str(), e.what());
    return 2;
  }

  orchestrator_detail::g_node_host_stop = 0;
  struct sigaction sa {};
  sa.sa_handler = orchestrator_detail::node_host_signal;
  sigaction(SIGTERM, &sa, nullptr);
  sigaction(SIGINT, &sa, nullptr);

  try {
    TraceRecorder recorder(args.run_id);
    NodeHostConfig host_cfg;
    host_cfg.seed = args.seed;
    host_cfg.executor_threads = args.executor_threads;
    host_cfg.modules = args.modules;
    NodeHost host(spec, recorder, host_cfg);

    TransportHub hub(host.bus());
    auto groups = plan_groups(spec.manifest, args.variant);
    auto exports = plan_exports(spec, groups);
    const GroupPorts& own = ports.at(args.group);
    hub.listen_udp(own.udp);
    hub.listen_tcp(own.tcp);
    for (const auto& ex : exports) {
      // inbound topics must be in the hub directory before peers send them
      if (ex.to == args.group) hub.add_topic(ex.topic);
      if (ex.from != args.group) continue;
      auto it = ports.find(ex.to);
      if (it == ports.end())
        throw std::runtime_error("export target group '" + ex.to + "' has no ports");
      if (ex.mode == QosPolicy::Reliability::Reliable)
        hub.export_topic_tcp(ex.topic, it->second.tcp);
      else
        hub.export_topic_udp(ex.topic, it->second.udp);
    }

    host.start();
    while (!orchestrator_detail::g_node_host_stop)
      std::this_thread::sleep_for(std::chrono::milliseconds(10));

    hub.stop();
    host.stop();

    std::filesystem::path dir =
        args.trace_dir.empty() ? std::filesystem::path(".")
                               : std::filesystem::path(args.trace_dir);
    write_trace_file(trace_file_path(dir, args.run_id, ::getpid()), recorder.snapshot());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "node-host %s: %s\n", args.group.c_str(), e.what());
    return 3;
  }
}

}  // namespace chainbench
