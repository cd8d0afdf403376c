#pragma once

// Node execution: each node gets an executor domain (serialized callbacks),
// a seeded RNG for compute durations, publisher handles for its declared
// publications and a single stored-input slot. Subscription callbacks store
// the received (topic, seq) into the slot; timer callbacks consume whatever
// the slot currently holds and record that identity in their start event,
// which is what lets the analyzer stitch timer hops into chains. The slot is
// not cleared on consumption: a timer firing twice without fresh input reads
// the same message twice, exactly like a keep-last(1) cache.
//
// Compute is a busy spin on the monotonic clock, never a sleep, so CPU
// utilization reflects the configured load.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "chainbench/bus.hpp"
#include "chainbench/exec.hpp"
#include "chainbench/model.hpp"
#include "chainbench/trace.hpp"
#include "chainbench/wire.hpp"

namespace chainbench {

/// Occupies the CPU for at least `duration` wall time; returns the elapsed.
inline Ns busy_compute(Ns duration) {
  Ns start = now_ns();
  if (duration > 0) {
    Ns deadline = start + duration;
    while (now_ns() < deadline) {
    }
  }
  return now_ns() - start;
}

/// Draws compute durations. Lognormal parameters are log-seconds, so
/// mu = -10, sigma = 0.5 centers around e^-10 s ≈ 45 µs.
class ComputeSampler {
 public:
  ComputeSampler(const ComputeModel& model, std::uint64_t seed) : model_(model), rng_(seed) {}

  Ns sample() {
    switch (model_.kind) {
      case ComputeModel::Kind::Fixed:
        return model_.fixed_ns;
      case ComputeModel::Kind::Uniform:
        return std::uniform_int_distribution<Ns>(model_.lo_ns, model_.hi_ns)(rng_);
      case ComputeModel::Kind::Lognormal: {
        double seconds = std::lognormal_distribution<double>(model_.mu, model_.sigma)(rng_);
        return static_cast<Ns>(seconds * 1e9);
      }
    }
    return 0;
  }

 private:
  ComputeModel model_;
  std::mt19937_64 rng_;
};

class NodeRuntime {
 public:
  NodeRuntime(const NodeSpec& spec, Bus& bus, Executor& executor, TimerService& timers,
              TraceRecorder& recorder, std::uint64_t global_seed)
      : spec_(spec),
        domain_(executor.domain()),
        producer_(recorder.producer(spec.name)),
        sampler_(spec.compute, global_seed ^ fnv1a64(spec.name)) {
    for (const auto& pub : spec_.publications) {
      Output out;
      out.handle = bus.advertise(spec_.name, pub.topic);
      out.trigger = pub.trigger_callback;
      auto payload = std::make_shared<std::vector<std::uint8_t>>(
          static_cast<std::size_t>(pub.payload_size));
      std::uint8_t fill = static_cast<std::uint8_t>(fnv1a64(spec_.name) ^ fnv1a64(pub.topic));
      for (std::size_t i = 0; i < payload->size(); ++i)
        (*payload)[i] = static_cast<std::uint8_t>(fill + i);
      out.payload = std::move(payload);
      outputs_.push_back(std::move(out));
    }

    for (const auto& sub : spec_.subscriptions) {
      std::uint32_t topic_id = recorder.intern_topic(sub.topic);
      bus.subscribe(spec_.name, sub.topic, sub.callback, sub.qos, domain_,
                    [this, topic_id, cb = sub.callback](const Envelope& env) {
                      run_callback(cb, topic_id, env.seq);
                    });
    }

    for (const auto& timer : spec_.timers) {
      timers.add_timer(timer.period_ns, domain_, [this, cb = timer.callback] {
        if (failed_) return;
        if (slot_set_)
          producer_->record(TraceKind::TimerCbStart, slot_topic_, slot_seq_);
        else
          producer_->record(TraceKind::TimerCbStart);
        guarded_compute_and_publish(cb);
        producer_->record(TraceKind::TimerCbEnd);
      });
    }
  }

  void announce_ready() { producer_->record(TraceKind::NodeReady); }

  const std::string& name() const { return spec_.name; }
  bool failed() const { return failed_; }
  Executor::Domain* domain() { return domain_; }

 private:
  struct Output {
    PublisherHandle* handle = nullptr;
    std::string trigger;
    std::shared_ptr<const std::vector<std::uint8_t>> payload;
  };

  // Runs on this node's domain; the bus brackets it with start/end events.
  void run_callback(const std::string& callback, std::uint32_t topic_id, std::uint64_t seq) {
    if (failed_) return;
    slot_topic_ = topic_id;
    slot_seq_ = seq;
    slot_set_ = true;
    guarded_compute_and_publish(callback);
  }

  void guarded_compute_and_publish(const std::string& callback) {
    try {
      busy_compute(sampler_.sample());
      for (auto& out : outputs_)
        if (out.trigger == callback) out.handle->publish(out.payload);
    } catch (const std::exception& e) {
      failed_ = true;
      std::fprintf(stderr, "node %s failed in callback %s: %s\n", spec_.name.c_str(),
                   callback.c_str(), e.what());
    } catch (...) {
      failed_ = true;
      std::fprintf(stderr, "node %s failed in callback %s\n", spec_.name.c_str(),
                   callback.c_str());
    }
  }

  NodeSpec spec_;
  Executor::Domain* domain_;
  TraceRecorder::Producer* producer_;
  ComputeSampler sampler_;
  std::vector<Output> outputs_;

  // slot state only touched from this node's serialized callbacks
  std::uint32_t slot_topic_ = 0;
  std::uint64_t slot_seq_ = 0;
  bool slot_set_ = false;
  std::atomic<bool> failed_{false};
};

struct NodeHostConfig {
  std::uint64_t seed = 1;
  unsigned executor_threads = Executor::default_thread_count();
  std::vector<std::string> modules;  // empty = host every node
};

/// Runs the nodes of selected modules inside this process.
class NodeHost {
 public:
  NodeHost(const WorkloadSpec& spec, TraceRecorder& recorder, NodeHostConfig config = {})
      : executor_(config.executor_threads), bus_(executor_, recorder) {
    for (const auto& node : spec.nodes) {
      for (const auto& pub : node.publications) bus_.declare_topic(pub.topic);
      for (const auto& sub : node.subscriptions) bus_.declare_topic(sub.topic);
    }
    for (const auto& node : spec.nodes) {
      if (!hosts_node(spec, config.modules, node.name)) continue;
      nodes_.push_back(std::make_unique<NodeRuntime>(node, bus_, executor_, timers_, recorder,
                                                     config.seed));
    }
  }

  ~NodeHost() { stop(); }

  static bool hosts_node(const WorkloadSpec& spec, const std::vector<std::string>& modules,
                         const std::string& node) {
    if (modules.empty()) return true;
    for (const auto& wanted : modules) {
      const auto* members = spec.manifest.find_module(wanted);
      if (!members) continue;
      for (const auto& m : *members)
        if (m == node) return true;
    }
    return false;
  }

  /// Emits node_ready for every hosted node, then arms the timers.
  void start() {
    for (auto& n : nodes_) n->announce_ready();
    timers_.start();
  }

  void stop() {
    timers_.stop();
    executor_.stop();
  }

  Bus& bus() { return bus_; }
  Executor& executor() { return executor_; }
  std::size_t node_count() const { return nodes_.size(); }

  bool any_failed() const {
    for (const auto& n : nodes_)
      if (n->failed()) return true;
    return false;
  }

 private:
  Executor executor_;
  TimerService timers_;
  Bus bus_;
  std::vector<std::unique_ptr<NodeRuntime>> nodes_;
};

}  // namespace chainbench
