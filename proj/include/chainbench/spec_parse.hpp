#pragma once

// Parsing, rendering and structural validation for the two config documents:
//
//   workload.spec   line-oriented node/graph description
//   chain.spec      one callback signature per line, Table-style `Node::(Sig)`
//
// Grammar of workload.spec (one directive per line, `#` starts a comment):
//
//   param <key>=<value>
//   node <name>
//     timer <period_ms> <callback>
//     sub <topic> <callback> [reliable|best-effort] [depth <n>]
//     pub <topic> <bytes> on <callback>
//     compute fixed <dur> | uniform <dur> <dur> | lognormal <mu> <sigma>
//   module <name>: <node>,<node>,...
//
// Durations accept ns/us/ms/s suffixes; timer periods are plain decimal
// milliseconds. Subscription QoS defaults to keep_last(1) best-effort.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chainbench/model.hpp"
#include "chainbench/units.hpp"

namespace chainbench {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.emplace_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

inline std::string require_ident(const std::string& tok, int line, const char* what) {
  if (!is_identifier(tok))
    throw ParseError(line, std::string("invalid ") + what + ": '" + tok + "'");
  return tok;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// workload.spec

inline WorkloadSpec parse_workload_spec(const std::string& text) {
  WorkloadSpec spec;
  NodeSpec* current = nullptr;
  std::set<std::string> node_names;
  std::set<std::string> module_names;

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = detail::strip_comment(raw);
    auto toks = detail::tokenize(line);
    if (toks.empty()) continue;
    const std::string& head = toks[0];

    if (head == "node") {
      if (toks.size() != 2) throw ParseError(lineno, "usage: node <name>");
      detail::require_ident(toks[1], lineno, "node name");
      if (!node_names.insert(toks[1]).second)
        throw ParseError(lineno, "duplicate node name '" + toks[1] + "'");
      spec.nodes.push_back(NodeSpec{});
      spec.nodes.back().name = toks[1];
      current = &spec.nodes.back();
    } else if (head == "timer") {
      if (!current) throw ParseError(lineno, "'timer' outside a node section");
      if (toks.size() != 3) throw ParseError(lineno, "usage: timer <period_ms> <callback>");
      auto period = parse_ms_decimal(toks[1]);
      if (!period) throw ParseError(lineno, "bad timer period '" + toks[1] + "'");
      if (*period <= 0) throw ParseError(lineno, "timer period must be > 0");
      current->timers.push_back(
          {*period, detail::require_ident(toks[2], lineno, "callback name")});
    } else if (head == "sub") {
      if (!current) throw ParseError(lineno, "'sub' outside a node section");
      if (toks.size() < 3) throw ParseError(lineno, "usage: sub <topic> <callback> [qos...]");
      SubscriptionSpec sub;
      sub.topic = detail::require_ident(toks[1], lineno, "topic");
      sub.callback = detail::require_ident(toks[2], lineno, "callback name");
      size_t i = 3;
      while (i < toks.size()) {
        if (toks[i] == "reliable") {
          sub.qos.reliability = QosPolicy::Reliability::Reliable;
          ++i;
        } else if (toks[i] == "best-effort" || toks[i] == "best_effort") {
          sub.qos.reliability = QosPolicy::Reliability::BestEffort;
          ++i;
        } else if (toks[i] == "depth" && i + 1 < toks.size()) {
          try {
            sub.qos.depth = std::stoi(toks[i + 1]);
          } catch (const std::exception&) {
            throw ParseError(lineno, "bad queue depth '" + toks[i + 1] + "'");
          }
          if (sub.qos.depth < 1) throw ParseError(lineno, "queue depth must be >= 1");
          i += 2;
        } else {
          throw ParseError(lineno, "unknown qos token '" + toks[i] + "'");
        }
      }
      for (const auto& s : current->subscriptions)
        if (s.topic == sub.topic && s.callback == sub.callback)
          throw ParseError(lineno, "duplicate subscription " + sub.topic + "/" + sub.callback);
      current->subscriptions.push_back(std::move(sub));
    } else if (head == "pub") {
      if (!current) throw ParseError(lineno, "'pub' outside a node section");
      if (toks.size() != 5 || toks[3] != "on")
        throw ParseError(lineno, "usage: pub <topic> <bytes> on <callback>");
      PublicationSpec pub;
      pub.topic = detail::require_ident(toks[1], lineno, "topic");
      auto size = parse_size_bytes(toks[2]);
      if (!size) throw ParseError(lineno, "bad payload size '" + toks[2] + "'");
      pub.payload_size = *size;
      pub.trigger_callback = detail::require_ident(toks[4], lineno, "callback name");
      current->publications.push_back(std::move(pub));
    } else if (head == "compute") {
      if (!current) throw ParseError(lineno, "'compute' outside a node section");
      if (toks.size() < 2) throw ParseError(lineno, "usage: compute <model> <params>");
      if (toks[1] == "fixed") {
        if (toks.size() != 3) throw ParseError(lineno, "usage: compute fixed <duration>");
        auto d = parse_duration_ns(toks[2]);
        if (!d) throw ParseError(lineno, "bad duration '" + toks[2] + "'");
        current->compute = ComputeModel::fixed(*d);
      } else if (toks[1] == "uniform") {
        if (toks.size() != 4) throw ParseError(lineno, "usage: compute uniform <lo> <hi>");
        auto lo = parse_duration_ns(toks[2]);
        auto hi = parse_duration_ns(toks[3]);
        if (!lo || !hi) throw ParseError(lineno, "bad duration in uniform compute");
        if (*lo > *hi) throw ParseError(lineno, "uniform compute requires lo <= hi");
        current->compute = ComputeModel::uniform(*lo, *hi);
      } else if (toks[1] == "lognormal") {
        if (toks.size() != 4) throw ParseError(lineno, "usage: compute lognormal <mu> <sigma>");
        try {
          current->compute = ComputeModel::lognormal(std::stod(toks[2]), std::stod(toks[3]));
        } catch (const std::exception&) {
          throw ParseError(lineno, "bad lognormal parameters");
        }
        if (current->compute.sigma < 0) throw ParseError(lineno, "lognormal sigma must be >= 0");
      } else {
        throw ParseError(lineno, "unknown compute model '" + toks[1] + "'");
      }
    } else if (head == "module") {
      // module <name>: a,b,c   (the colon may stick to the name)
      std::string rest = line;
      rest.erase(0, rest.find("module") + 6);
      auto colon = rest.find(':');
      if (colon == std::string::npos) throw ParseError(lineno, "usage: module <name>: <nodes>");
      std::string name = rest.substr(0, colon);
      name.erase(std::remove_if(name.begin(), name.end(),
                                [](unsigned char c) { return std::isspace(c); }),
                 name.end());
      detail::require_ident(name, lineno, "module name");
      if (!module_names.insert(name).second)
        throw ParseError(lineno, "duplicate module '" + name + "'");
      std::vector<std::string> members;
      std::string list = rest.substr(colon + 1);
      std::string item;
      std::istringstream ls(list);
      while (std::getline(ls, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(),
                                  [](unsigned char c) { return std::isspace(c); }),
                   item.end());
        if (item.empty()) continue;
        members.push_back(detail::require_ident(item, lineno, "node name"));
      }
      if (members.empty()) throw ParseError(lineno, "module '" + name + "' lists no nodes");
      spec.manifest.modules.emplace_back(std::move(name), std::move(members));
    } else if (head == "param") {
      // param key=value ; value runs to end of line
      auto pos = line.find("param");
      std::string rest = line.substr(pos + 5);
      auto eq = rest.find('=');
      if (eq == std::string::npos) throw ParseError(lineno, "usage: param <key>=<value>");
      auto trim = [](std::string s) {
        size_t b = s.find_first_not_of(" \t");
        size_t e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
      };
      std::string key = trim(rest.substr(0, eq));
      std::string value = trim(rest.substr(eq + 1));
      if (key.empty()) throw ParseError(lineno, "empty param key");
      spec.manifest.launch_params[key] = value;
    } else {
      throw ParseError(lineno, "unknown field '" + head + "'");
    }
  }
  return spec;
}

inline std::string render_workload_spec(const WorkloadSpec& spec) {
  std::ostringstream out;
  for (const auto& [k, v] : spec.manifest.launch_params) out << "param " << k << "=" << v << "\n";
  for (const auto& node : spec.nodes) {
    out << "node " << node.name << "\n";
    switch (node.compute.kind) {
      case ComputeModel::Kind::Fixed:
        if (node.compute.fixed_ns != 0)
          out << "  compute fixed " << node.compute.fixed_ns << "ns\n";
        break;
      case ComputeModel::Kind::Uniform:
        out << "  compute uniform " << node.compute.lo_ns << "ns " << node.compute.hi_ns << "ns\n";
        break;
      case ComputeModel::Kind::Lognormal: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g %.17g", node.compute.mu, node.compute.sigma);
        out << "  compute lognormal " << buf << "\n";
        break;
      }
    }
    for (const auto& t : node.timers)
      out << "  timer " << format_ms_decimal(t.period_ns) << " " << t.callback << "\n";
    for (const auto& s : node.subscriptions) {
      out << "  sub " << s.topic << " " << s.callback;
      if (s.qos.reliability == QosPolicy::Reliability::Reliable) out << " reliable";
      if (s.qos.depth != 1) out << " depth " << s.qos.depth;
      out << "\n";
    }
    for (const auto& p : node.publications)
      out << "  pub " << p.topic << " " << p.payload_size << " on " << p.trigger_callback << "\n";
  }
  for (const auto& [name, members] : spec.manifest.modules) {
    out << "module " << name << ":";
    for (size_t i = 0; i < members.size(); ++i) out << (i ? "," : " ") << members[i];
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// chain.spec

inline ChainSpec parse_chain_spec(const std::string& text) {
  ChainSpec chain;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = detail::strip_comment(raw);
    auto toks = detail::tokenize(line);
    if (toks.empty()) continue;
    if (toks.size() != 1)
      throw ParseError(lineno, "expected a single Node::(Sig) entry per line");
    const std::string& tok = toks[0];
    auto sep = tok.find("::(");
    if (sep == std::string::npos || tok.back() != ')')
      throw ParseError(lineno, "malformed hop '" + tok + "', expected Node::(Sig)");
    ChainHop hop;
    hop.node = detail::require_ident(tok.substr(0, sep), lineno, "node name");
    hop.signature = tok.substr(sep + 3, tok.size() - sep - 4);
    hop.kind = hop.signature.empty() ? HopKind::Timer : HopKind::Subscription;
    if (hop.kind == HopKind::Timer) {
      if (chain.hops.empty())
        throw ParseError(lineno, "timer hop '" + hop.node + "' has no predecessor");
      if (chain.hops.back().node != hop.node)
        throw ParseError(lineno, "timer hop '" + hop.node +
                                     "' must follow a hop on the same node");
    }
    chain.hops.push_back(std::move(hop));
  }
  return chain;
}

inline std::string render_chain_spec(const ChainSpec& chain) {
  std::ostringstream out;
  for (const auto& h : chain.hops) out << h.node << "::(" << h.signature << ")\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Validation and chain resolution

enum class Severity { Warning, Fatal };

struct Finding {
  Severity severity = Severity::Warning;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  std::optional<ChainSpec> resolved_chain;
  int resolved_hops = 0;

  bool valid() const {
    for (const auto& f : findings)
      if (f.severity == Severity::Fatal) return false;
    return true;
  }
  void fatal(std::string msg) { findings.push_back({Severity::Fatal, std::move(msg)}); }
  void warn(std::string msg) { findings.push_back({Severity::Warning, std::move(msg)}); }
  std::string to_string() const {
    std::ostringstream out;
    for (const auto& f : findings)
      out << (f.severity == Severity::Fatal ? "fatal: " : "warning: ") << f.message << "\n";
    return out.str();
  }
};

namespace detail {

// Binds topics and callbacks for each hop against the workload graph.
// Connectivity rule: hop i's resolved callback must publish exactly one topic
// the hop i+1 node subscribes to (subscription hops); timer hops stay on the
// node and consume its stored input.
inline void resolve_chain_hops(const WorkloadSpec& spec, ChainSpec chain,
                               ValidationReport& report) {
  bool ok = true;
  for (size_t i = 0; i < chain.hops.size(); ++i) {
    ChainHop& hop = chain.hops[i];
    const NodeSpec* node = spec.find_node(hop.node);
    if (!node) {
      report.fatal("chain hop " + std::to_string(i) + " references undeclared node '" +
                   hop.node + "'");
      ok = false;
      continue;
    }
    if (hop.kind == HopKind::Timer) {
      if (node->timers.empty()) {
        report.fatal("chain hop " + std::to_string(i) + ": node '" + hop.node +
                     "' declares no timer");
        ok = false;
        continue;
      }
      if (node->timers.size() > 1)
        report.warn("node '" + hop.node + "' has several timers; chain hop " +
                    std::to_string(i) + " uses '" + node->timers.front().callback + "'");
      hop.callback = node->timers.front().callback;
      if (i == 0 || chain.hops[i - 1].node != hop.node) {
        report.fatal("chain hop " + std::to_string(i) +
                     ": timer hop lacks a same-node predecessor");
        ok = false;
        continue;
      }
    } else if (i == 0) {
      // Sensor hop: the node's subscription is the chain entry point.
      if (node->subscriptions.empty()) {
        report.fatal("chain hop 0: node '" + hop.node + "' subscribes to nothing");
        ok = false;
        continue;
      }
      if (node->subscriptions.size() > 1) {
        report.fatal("chain hop 0: node '" + hop.node +
                     "' has several subscriptions; sensor topic is ambiguous");
        ok = false;
        continue;
      }
      hop.topic = node->subscriptions.front().topic;
      hop.callback = node->subscriptions.front().callback;
      chain.sensor_topic = hop.topic;
    } else {
      // Connect via the previous hop's publications.
      const ChainHop& prev = chain.hops[i - 1];
      if (prev.callback.empty()) {
        ok = false;
        continue;  // upstream already failed
      }
      const NodeSpec* prev_node = spec.find_node(prev.node);
      std::vector<const SubscriptionSpec*> candidates;
      for (const auto& p : prev_node->publications) {
        if (p.trigger_callback != prev.callback) continue;
        for (const auto& s : node->subscriptions)
          if (s.topic == p.topic) candidates.push_back(&s);
      }
      if (candidates.empty()) {
        report.fatal("chain hop " + std::to_string(i) + ": no topic connects '" + prev.node +
                     "' to '" + hop.node + "'");
        ok = false;
        continue;
      }
      if (candidates.size() > 1) {
        report.fatal("chain hop " + std::to_string(i) + ": multiple topics connect '" +
                     prev.node + "' to '" + hop.node + "'");
        ok = false;
        continue;
      }
      hop.topic = candidates.front()->topic;
      hop.callback = candidates.front()->callback;
      chain.hops[i - 1].output_topic = hop.topic;
    }
    ++report.resolved_hops;
  }

  // Final hop output: the unique publication triggered by its callback, if any.
  if (ok && !chain.hops.empty()) {
    ChainHop& last = chain.hops.back();
    const NodeSpec* node = spec.find_node(last.node);
    std::vector<const PublicationSpec*> outs;
    for (const auto& p : node->publications)
      if (p.trigger_callback == last.callback) outs.push_back(&p);
    if (outs.size() == 1) {
      last.output_topic = outs.front()->topic;
    } else if (outs.size() > 1) {
      report.warn("final chain hop publishes several topics; end-to-end latency is "
                  "measured to callback completion");
    }
  }
  if (ok) report.resolved_chain = std::move(chain);
}

}  // namespace detail

inline ValidationReport validate_graph(const WorkloadSpec& spec, const ChainSpec& chain) {
  ValidationReport report;

  std::map<std::string, std::vector<const NodeSpec*>> publishers;  // topic -> nodes
  std::set<std::string> subscribed;
  for (const auto& node : spec.nodes) {
    if (node.timers.empty() && node.subscriptions.empty())
      report.fatal("node '" + node.name + "' has neither timer nor subscription and can "
                   "never execute");
    for (const auto& p : node.publications) {
      publishers[p.topic].push_back(&node);
      if (!node.declares_callback(p.trigger_callback))
        report.fatal("node '" + node.name + "': publication on '" + p.topic +
                     "' references undeclared callback '" + p.trigger_callback + "'");
    }
    for (const auto& s : node.subscriptions) subscribed.insert(s.topic);
  }
  for (const auto& node : spec.nodes)
    for (const auto& s : node.subscriptions)
      if (!publishers.count(s.topic))
        report.warn("node '" + node.name + "' subscribes to '" + s.topic +
                    "' which nobody publishes");
  for (const auto& [topic, nodes] : publishers) {
    if (!subscribed.count(topic))
      report.warn("topic '" + topic + "' is published but never subscribed");
    if (nodes.size() > 1)
      report.warn("topic '" + topic + "' has " + std::to_string(nodes.size()) +
                  " publishers; per-topic sequence numbers will not be unique");
  }

  // Manifest: when present it must partition the node set.
  if (!spec.manifest.empty()) {
    std::map<std::string, int> seen;
    for (const auto& [mod, members] : spec.manifest.modules) {
      for (const auto& m : members) {
        if (!spec.find_node(m))
          report.fatal("module '" + mod + "' references unknown node '" + m + "'");
        else
          seen[m]++;
      }
    }
    for (const auto& node : spec.nodes) {
      auto it = seen.find(node.name);
      if (it == seen.end())
        report.fatal("node '" + node.name + "' is not assigned to any module");
      else if (it->second > 1)
        report.fatal("node '" + node.name + "' appears in several modules");
    }
  }

  if (!chain.hops.empty()) detail::resolve_chain_hops(spec, chain, report);
  return report;
}

inline ValidationReport validate_graph(const WorkloadSpec& spec) {
  return validate_graph(spec, ChainSpec{});
}

/// Resolves hop topics/callbacks or throws with the validation findings.
inline ChainSpec resolve_chain(const WorkloadSpec& spec, const ChainSpec& chain) {
  auto report = validate_graph(spec, chain);
  if (!report.resolved_chain)
    throw std::runtime_error("chain does not resolve against workload:\n" + report.to_string());
  return *report.resolved_chain;
}

}  // namespace chainbench
