#pragma once

// The mini-autoware preset: eight functional modules whose node counts scale
// from the full stack down to a desk-size graph, a 17-hop sensor-to-actuator
// chain threaded through four of them, and filler nodes supplying background
// pub/sub load. The chain keeps its hop structure at every scale; when a
// module shrinks below its chain-role count, consecutive roles fold onto
// shared nodes (the merged node keeps the first role's name).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "chainbench/clock.hpp"
#include "chainbench/model.hpp"
#include "chainbench/spec_parse.hpp"

namespace chainbench {

struct PresetConfig {
  double scale = 1.0;                           // fraction of full node counts, (0,1]
  std::map<std::size_t, Ns> chain_periods;      // chain hop index -> timer period
  std::map<std::string, std::size_t> payload_profile;  // topic -> bytes
  Ns sensor_period = 100 * kMillisecond;
  Ns filler_period = 100 * kMillisecond;
};

struct MiniAutoware {
  WorkloadSpec workload;
  ModuleManifest manifest;
  ChainSpec chain;
};

namespace preset_detail {

struct ModuleShape {
  const char* name;
  int full_nodes;
};

inline const std::vector<ModuleShape>& module_shapes() {
  static const std::vector<ModuleShape> shapes = {
      {"sensing", 48}, {"perception", 49}, {"localization", 33}, {"map", 6},
      {"planning", 25}, {"control", 8},    {"vehicle", 1},       {"system", 21},
  };
  return shapes;
}

// One chain role = one logical node. Roles appear in hop order; a role with a
// timer owns the hop that re-publishes from its stored input.
struct ChainRole {
  const char* node;
  const char* module;
  const char* sub_topic;       // empty for the stimulus source
  const char* sub_signature;   // hop signature for the subscription hop
  const char* pub_topic;       // empty when the role only stores its input
  bool timer = false;          // publishes from a timer hop instead
  Ns timer_period = 0;
};

inline const std::vector<ChainRole>& chain_roles() {
  static const std::vector<ChainRole> roles = {
      {"Filter", "localization", "/chain/points_raw", "PointCloud2,PointIndices",
       "/chain/points_filtered"},
      {"NDTScanMatcher", "localization", "/chain/points_filtered", "PointCloud2",
       "/chain/ndt_pose"},
      {"EKFLocalizer", "localization", "/chain/ndt_pose", "PoseWithCovarianceStamped",
       "/chain/odometry", true, 20 * kMillisecond},
      {"StopFilter", "localization", "/chain/odometry", "Odometry",
       "/chain/odometry_stopped"},
      {"BehaviorPathPlannerNode", "planning", "/chain/odometry_stopped", "Odometry",
       "/chain/path_with_lane_id", true, 100 * kMillisecond},
      {"BehaviorVelocityPlannerNode", "planning", "/chain/path_with_lane_id",
       "PathWithLaneId", "/chain/path"},
      {"ObstacleAvoidancePlanner", "planning", "/chain/path", "Path",
       "/chain/trajectory_avoidance"},
      {"ObstacleVelocityLimiterNode", "planning", "/chain/trajectory_avoidance",
       "Trajectory", "/chain/trajectory_limited"},
      {"ObstacleStopPlannerNode", "planning", "/chain/trajectory_limited", "Trajectory",
       "/chain/trajectory_stop"},
      {"ScenarioSelectorNode", "planning", "/chain/trajectory_stop", "Trajectory",
       "/chain/trajectory_scenario"},
      {"MotionVelocitySmootherNode", "planning", "/chain/trajectory_scenario", "Trajectory",
       "/chain/trajectory_smoothed"},
      {"PlanningValidator", "planning", "/chain/trajectory_smoothed", "Trajectory",
       "/chain/trajectory_validated"},
      {"Controller", "control", "/chain/trajectory_validated", "Trajectory",
       "/chain/control_cmd", true, 33 * kMillisecond},
      {"VehicleCmdGate", "vehicle", "/chain/control_cmd", "AckermannControlCommand",
       "/chain/gate_cmd"},
  };
  return roles;
}

inline std::size_t scaled_count(int full, double scale) {
  return static_cast<std::size_t>(
      std::max(1.0, std::ceil(static_cast<double>(full) * scale)));
}

inline std::string callback_for_topic(const std::string& topic) {
  auto slash = topic.find_last_of('/');
  return "on_" + (slash == std::string::npos ? topic : topic.substr(slash + 1));
}

inline std::size_t payload_bytes(const PresetConfig& preset, const std::string& topic,
                                 std::size_t fallback) {
  auto it = preset.payload_profile.find(topic);
  return it == preset.payload_profile.end() ? fallback : it->second;
}

inline std::size_t default_chain_payload(const std::string& topic) {
  if (topic.find("points") != std::string::npos) return 64 * 1024;
  if (topic.find("path") != std::string::npos || topic.find("trajectory") != std::string::npos)
    return 16 * 1024;
  if (topic.find("cmd") != std::string::npos) return 512;
  return 2 * 1024;
}

inline std::string format_scale(double scale) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", scale);
  return buf;
}

}  // namespace preset_detail

inline MiniAutoware build_mini_autoware(const PresetConfig& preset) {
  using namespace preset_detail;
  if (!(preset.scale > 0.0) || preset.scale > 1.0)
    throw std::invalid_argument("preset scale must be in (0, 1]");

  MiniAutoware out;
  auto chain_compute = ComputeModel::lognormal(std::log(0.001), 0.25);
  auto filler_compute = ComputeModel::fixed(200 * kMicrosecond);

  // role -> hosting node after folding
  std::map<std::string, std::string> role_host;
  std::map<std::string, std::vector<const ChainRole*>> module_roles;
  for (const auto& role : chain_roles()) module_roles[role.module].push_back(&role);

  // timer periods by owning role, after per-hop overrides
  std::map<std::string, Ns> role_period;
  {
    std::size_t hop = 0;
    for (const auto& role : chain_roles()) {
      ++hop;  // past the subscription hop; a timer hop now sits at index `hop`
      if (role.timer) {
        Ns period = role.timer_period;
        auto it = preset.chain_periods.find(hop);
        if (it != preset.chain_periods.end()) period = it->second;
        role_period[role.node] = period;
        ++hop;
      }
    }
  }

  for (const auto& shape : module_shapes()) {
    std::size_t budget = scaled_count(shape.full_nodes, preset.scale);
    std::vector<std::string> members;

    std::vector<const ChainRole*> roles;
    if (auto it = module_roles.find(shape.name); it != module_roles.end()) roles = it->second;
    bool has_source = std::string(shape.name) == "sensing";
    std::size_t reserved = has_source ? 1 : 0;

    if (has_source) {
      NodeSpec source;
      source.name = "LidarDriver";
      source.compute = ComputeModel::fixed(100 * kMicrosecond);
      source.timers.push_back({preset.sensor_period, "capture"});
      source.publications.push_back(
          {"/chain/points_raw",
           payload_bytes(preset, "/chain/points_raw", default_chain_payload("points")),
           "capture"});
      members.push_back(source.name);
      out.workload.nodes.push_back(std::move(source));
    }

    if (!roles.empty()) {
      std::size_t capacity = budget > reserved ? budget - reserved : 1;

      // The chain entry role must keep a single subscription so the sensor
      // topic stays unambiguous; it never shares a node with other roles.
      std::vector<std::vector<const ChainRole*>> grouped;
      bool hosts_entry = roles.front() == &chain_roles().front();
      std::vector<const ChainRole*> foldable = roles;
      if (hosts_entry) {
        grouped.push_back({roles.front()});
        foldable.erase(foldable.begin());
        capacity = capacity > 1 ? capacity - 1 : 1;
      }
      if (!foldable.empty()) {
        std::size_t groups = std::min(foldable.size(), capacity);
        std::size_t base = foldable.size() / groups;
        std::size_t extra = foldable.size() % groups;
        std::size_t next = 0;
        for (std::size_t g = 0; g < groups; ++g) {
          std::size_t take = base + (g < extra ? 1 : 0);
          grouped.emplace_back(foldable.begin() + next, foldable.begin() + next + take);
          next += take;
        }
      }

      for (const auto& group : grouped) {
        NodeSpec node;
        node.name = group.front()->node;
        node.compute = chain_compute;
        for (const ChainRole* role_ptr : group) {
          const ChainRole& role = *role_ptr;
          role_host[role.node] = node.name;
          std::string cb = callback_for_topic(role.sub_topic);
          node.subscriptions.push_back({role.sub_topic, cb, QosPolicy{}});
          if (role.timer) {
            node.timers.push_back({role_period.at(role.node), "tick"});
            if (*role.pub_topic)
              node.publications.push_back(
                  {role.pub_topic,
                   payload_bytes(preset, role.pub_topic, default_chain_payload(role.pub_topic)),
                   "tick"});
          } else if (*role.pub_topic) {
            node.publications.push_back(
                {role.pub_topic,
                 payload_bytes(preset, role.pub_topic, default_chain_payload(role.pub_topic)),
                 cb});
          }
        }
        members.push_back(node.name);
        out.workload.nodes.push_back(std::move(node));
      }
    }

    // fillers: a ring of periodic publishers inside the module
    std::size_t fillers = budget > members.size() ? budget - members.size() : 0;
    std::size_t ring = fillers;
    for (std::size_t i = 0; i < fillers; ++i) {
      NodeSpec node;
      node.name = std::string(shape.name) + "_filler_" + std::to_string(i);
      node.compute = filler_compute;
      std::string own = "/" + std::string(shape.name) + "/filler_" + std::to_string(i);
      std::string prev =
          "/" + std::string(shape.name) + "/filler_" + std::to_string((i + ring - 1) % ring);
      node.timers.push_back({preset.filler_period, "tick"});
      node.publications.push_back({own, payload_bytes(preset, own, 1024), "tick"});
      node.subscriptions.push_back({prev, "on_neighbor", QosPolicy{}});
      members.push_back(node.name);
      out.workload.nodes.push_back(std::move(node));
    }

    out.manifest.modules.emplace_back(shape.name, std::move(members));
  }

  out.manifest.launch_params["preset"] = "mini-autoware";
  out.manifest.launch_params["scale"] = format_scale(preset.scale);
  out.workload.manifest = out.manifest;

  // unresolved hop list; resolution binds topics and callbacks against the graph
  ChainSpec chain;
  for (const auto& role : chain_roles()) {
    ChainHop sub;
    sub.node = role_host.at(role.node);
    sub.kind = HopKind::Subscription;
    sub.signature = role.sub_signature;
    chain.hops.push_back(sub);
    if (role.timer) {
      ChainHop timer;
      timer.node = role_host.at(role.node);
      timer.kind = HopKind::Timer;
      chain.hops.push_back(timer);
    }
  }
  out.chain = resolve_chain(out.workload, chain);
  return out;
}

}  // namespace chainbench
