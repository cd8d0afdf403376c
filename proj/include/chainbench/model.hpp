#pragma once

// Domain model for workload graphs, module manifests, computation chains and
// deployment plans. These are plain value types; parsing and structural
// validation live in spec_parse.hpp.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chainbench/clock.hpp"

namespace chainbench {

struct QosPolicy {
  enum class Reliability { BestEffort, Reliable };
  int depth = 1;  // keep_last history depth
  Reliability reliability = Reliability::BestEffort;
  bool operator==(const QosPolicy&) const = default;
};

struct TimerSpec {
  Ns period_ns = 0;
  std::string callback;
  bool operator==(const TimerSpec&) const = default;
};

struct SubscriptionSpec {
  std::string topic;
  std::string callback;
  QosPolicy qos;
  bool operator==(const SubscriptionSpec&) const = default;
};

/// A publication fires when the named callback (timer or subscription) runs.
struct PublicationSpec {
  std::string topic;
  std::uint64_t payload_size = 0;
  std::string trigger_callback;
  bool operator==(const PublicationSpec&) const = default;
};

/// Synthetic busy-work duration drawn per callback invocation.
struct ComputeModel {
  enum class Kind { Fixed, Uniform, Lognormal };
  Kind kind = Kind::Fixed;
  Ns fixed_ns = 0;
  Ns lo_ns = 0;
  Ns hi_ns = 0;
  double mu = 0.0;     // lognormal: mean of log(duration_ns)
  double sigma = 0.0;  // lognormal: stddev of log(duration_ns)
  bool operator==(const ComputeModel&) const = default;

  static ComputeModel fixed(Ns d) {
    ComputeModel m;
    m.kind = Kind::Fixed;
    m.fixed_ns = d;
    return m;
  }
  static ComputeModel uniform(Ns lo, Ns hi) {
    ComputeModel m;
    m.kind = Kind::Uniform;
    m.lo_ns = lo;
    m.hi_ns = hi;
    return m;
  }
  static ComputeModel lognormal(double mu, double sigma) {
    ComputeModel m;
    m.kind = Kind::Lognormal;
    m.mu = mu;
    m.sigma = sigma;
    return m;
  }
};

struct NodeSpec {
  std::string name;
  std::vector<TimerSpec> timers;
  std::vector<SubscriptionSpec> subscriptions;
  std::vector<PublicationSpec> publications;
  ComputeModel compute;
  bool operator==(const NodeSpec&) const = default;

  bool declares_callback(const std::string& cb) const {
    for (const auto& t : timers)
      if (t.callback == cb) return true;
    for (const auto& s : subscriptions)
      if (s.callback == cb) return true;
    return false;
  }
};

/// Grouping of nodes into launchable modules plus the centralized launch
/// parameters kept outside the node definitions.
struct ModuleManifest {
  std::vector<std::pair<std::string, std::vector<std::string>>> modules;
  std::map<std::string, std::string> launch_params;
  bool operator==(const ModuleManifest&) const = default;

  bool empty() const { return modules.empty(); }
  const std::vector<std::string>* find_module(const std::string& name) const {
    for (const auto& [n, nodes] : modules)
      if (n == name) return &nodes;
    return nullptr;
  }
};

struct WorkloadSpec {
  std::vector<NodeSpec> nodes;
  ModuleManifest manifest;
  bool operator==(const WorkloadSpec&) const = default;

  const NodeSpec* find_node(const std::string& name) const {
    for (const auto& n : nodes)
      if (n.name == name) return &n;
    return nullptr;
  }
  std::string param(const std::string& key, const std::string& fallback = "") const {
    auto it = manifest.launch_params.find(key);
    return it == manifest.launch_params.end() ? fallback : it->second;
  }
};

enum class HopKind { Subscription, Timer };

/// One hop of a computation chain. `signature` is the opaque label from the
/// chain file (the part inside the parentheses); `topic` / `output_topic`
/// are filled in by chain resolution against a workload spec.
struct ChainHop {
  std::string node;
  HopKind kind = HopKind::Subscription;
  std::string signature;
  std::string topic;         // input topic (subscription hops, resolved)
  std::string output_topic;  // empty = hop publishes nothing on the chain path
  std::string callback;      // resolved callback name
  bool operator==(const ChainHop&) const = default;
};

struct ChainSpec {
  std::vector<ChainHop> hops;
  std::string sensor_topic;  // resolved input topic of hop 0
  bool operator==(const ChainSpec&) const = default;

  bool resolved() const {
    return !hops.empty() && !sensor_topic.empty();
  }
};

enum class DeploymentVariant { InProcess, SingleGroup, MultiGroup };
enum class IsolationLevel { None, ProcessGroup, ProcessGroupWithLimits };

inline const char* variant_name(DeploymentVariant v) {
  switch (v) {
    case DeploymentVariant::InProcess: return "in_process";
    case DeploymentVariant::SingleGroup: return "single_group";
    case DeploymentVariant::MultiGroup: return "multi_group";
  }
  return "?";
}

inline std::optional<DeploymentVariant> parse_variant(const std::string& s) {
  if (s == "in_process" || s == "in-process" || s == "bare") return DeploymentVariant::InProcess;
  if (s == "single_group" || s == "single-group" || s == "single") return DeploymentVariant::SingleGroup;
  if (s == "multi_group" || s == "multi-group" || s == "multi") return DeploymentVariant::MultiGroup;
  return std::nullopt;
}

struct DeploymentPlan {
  DeploymentVariant variant = DeploymentVariant::InProcess;
  IsolationLevel isolation = IsolationLevel::ProcessGroup;
  // Optional per-group CPU pinning; key "*" applies to every group.
  std::map<std::string, std::vector<int>> affinity;
  bool operator==(const DeploymentPlan&) const = default;
};

}  // namespace chainbench
