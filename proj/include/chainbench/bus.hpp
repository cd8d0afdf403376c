#pragma once

// Topic bus for one process. Publishing stamps (seq, publish_ts), emits the
// publish trace event, drops the envelope into every local subscription
// queue (keep-last: a full queue evicts its oldest entry) and hands it to
// any registered remote sinks. Dispatch happens on the subscriber node's
// executor domain; the dispatch task pops the oldest queued envelope and
// runs the callback between sub_cb_start / sub_cb_end events.
//
// Sequence numbers count per (publisher node, topic) starting at 1; 0 means
// "none". Topics must be declared before a publisher can attach, which keeps
// a typo from silently creating a parallel topic; subscribing declares
// implicitly because the subscriber side may be wired before the publisher's
// process exists.

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "chainbench/exec.hpp"
#include "chainbench/model.hpp"
#include "chainbench/trace.hpp"
#include "chainbench/wire.hpp"

namespace chainbench {

struct Envelope {
  std::string topic;
  std::uint64_t seq = 0;
  Ns publish_ts = 0;
  std::shared_ptr<const std::vector<std::uint8_t>> payload;
};

class Bus;

class PublisherHandle {
 public:
  /// Returns the stamped sequence number.
  std::uint64_t publish(std::shared_ptr<const std::vector<std::uint8_t>> payload);
  std::uint64_t publish(std::vector<std::uint8_t> payload) {
    return publish(std::make_shared<const std::vector<std::uint8_t>>(std::move(payload)));
  }

  const std::string& topic() const { return topic_; }
  const std::string& node() const { return node_; }

 private:
  friend class Bus;
  Bus* bus_ = nullptr;
  std::string node_;
  std::string topic_;
  TraceRecorder::Producer* producer_ = nullptr;
  std::uint32_t topic_id_ = 0;
  std::uint64_t next_seq_ = 1;
  std::mutex seq_mutex_;
};

class Bus {
 public:
  using Callback = std::function<void(const Envelope&)>;
  using RemoteSink = std::function<void(const Envelope&)>;

  Bus(Executor& executor, TraceRecorder& recorder) : executor_(executor), recorder_(recorder) {}

  void declare_topic(const std::string& topic) {
    std::lock_guard lock(mutex_);
    topics_.insert(topic);
  }

  bool knows_topic(const std::string& topic) const {
    std::lock_guard lock(mutex_);
    return topics_.count(topic) > 0;
  }

  /// One handle per (node, topic); repeated advertises share the counter.
  PublisherHandle* advertise(const std::string& node, const std::string& topic) {
    std::lock_guard lock(mutex_);
    if (!topics_.count(topic)) throw std::runtime_error("advertise of unknown topic " + topic);
    auto key = std::make_pair(node, topic);
    auto it = publishers_.find(key);
    if (it != publishers_.end()) return it->second.get();
    auto handle = std::make_unique<PublisherHandle>();
    handle->bus_ = this;
    handle->node_ = node;
    handle->topic_ = topic;
    handle->producer_ = recorder_.producer(node);
    handle->topic_id_ = recorder_.intern_topic(topic);
    return publishers_.emplace(key, std::move(handle)).first->second.get();
  }

  void subscribe(const std::string& node, const std::string& topic,
                 const std::string& callback_name, QosPolicy qos, Executor::Domain* domain,
                 Callback callback) {
    std::lock_guard lock(mutex_);
    topics_.insert(topic);
    auto& subs = subscriptions_[topic];
    for (const auto& s : subs)
      if (s->node == node && s->callback_name == callback_name)
        throw std::runtime_error("duplicate subscription of " + node + " to " + topic + "/" +
                                 callback_name);
    auto sub = std::make_shared<Subscription>();
    sub->node = node;
    sub->callback_name = callback_name;
    sub->depth = static_cast<std::size_t>(qos.depth);
    sub->domain = domain;
    sub->callback = std::move(callback);
    sub->producer = recorder_.producer(node);
    sub->topic_id = recorder_.intern_topic(topic);
    subs.push_back(std::move(sub));
  }

  /// Remote sinks receive every locally published envelope on the topic.
  void add_remote_sink(const std::string& topic, RemoteSink sink) {
    std::lock_guard lock(mutex_);
    topics_.insert(topic);
    remote_sinks_[topic].push_back(std::move(sink));
  }

  /// Entry point for envelopes arriving from another process: local
  /// subscriptions only, no re-export, no publish event (the publisher's
  /// process already recorded it).
  void inject(Envelope envelope) {
    auto shared = std::make_shared<const Envelope>(std::move(envelope));
    deliver_local(shared);
  }

  std::uint64_t evicted_count() const { return evicted_.load(std::memory_order_relaxed); }

 private:
  friend class PublisherHandle;

  struct Subscription {
    std::string node;
    std::string callback_name;
    std::size_t depth = 1;
    Executor::Domain* domain = nullptr;
    Callback callback;
    TraceRecorder::Producer* producer = nullptr;
    std::uint32_t topic_id = 0;

    std::mutex queue_mutex;
    std::deque<std::shared_ptr<const Envelope>> queue;
  };

  void deliver_local(const std::shared_ptr<const Envelope>& env) {
    std::vector<std::shared_ptr<Subscription>> targets;
    {
      std::lock_guard lock(mutex_);
      auto it = subscriptions_.find(env->topic);
      if (it != subscriptions_.end()) targets = it->second;
    }
    for (auto& sub : targets) {
      {
        std::lock_guard lock(sub->queue_mutex);
        if (sub->queue.size() >= sub->depth) {
          sub->queue.pop_front();  // keep-last: oldest goes
          evicted_.fetch_add(1, std::memory_order_relaxed);
        }
        sub->queue.push_back(env);
      }
      auto s = sub;
      sub->domain->post([s] { dispatch_one(*s); });
    }
  }

  static void dispatch_one(Subscription& sub) {
    std::shared_ptr<const Envelope> env;
    {
      std::lock_guard lock(sub.queue_mutex);
      if (sub.queue.empty()) return;  // consumed by an earlier dispatch
      env = std::move(sub.queue.front());
      sub.queue.pop_front();
    }
    sub.producer->record(TraceKind::SubCbStart, sub.topic_id, env->seq);
    sub.callback(*env);
    sub.producer->record(TraceKind::SubCbEnd, sub.topic_id, env->seq);
  }

  void route(PublisherHandle& handle, const std::shared_ptr<const Envelope>& env) {
    std::vector<RemoteSink>* sinks = nullptr;
    {
      std::lock_guard lock(mutex_);
      auto it = remote_sinks_.find(handle.topic_);
      if (it != remote_sinks_.end()) sinks = &it->second;
    }
    deliver_local(env);
    if (sinks)
      for (auto& sink : *sinks) sink(*env);
  }

  Executor& executor_;
  TraceRecorder& recorder_;
  mutable std::mutex mutex_;
  std::set<std::string> topics_;
  std::map<std::pair<std::string, std::string>, std::unique_ptr<PublisherHandle>> publishers_;
  std::map<std::string, std::vector<std::shared_ptr<Subscription>>> subscriptions_;
  std::map<std::string, std::vector<RemoteSink>> remote_sinks_;
  std::atomic<std::uint64_t> evicted_{0};
};

inline std::uint64_t PublisherHandle::publish(
    std::shared_ptr<const std::vector<std::uint8_t>> payload) {
  auto env = std::make_shared<Envelope>();
  env->topic = topic_;
  env->payload = std::move(payload);
  std::uint64_t seq;
  {
    std::lock_guard lock(seq_mutex_);
    seq = next_seq_++;
    env->seq = seq;
    env->publish_ts = now_ns();
    producer_->record(TraceKind::Publish, topic_id_, seq, true);
  }
  bus_->route(*this, env);
  return seq;
}

}  // namespace chainbench
