#pragma once

// In-memory event recording. Each producer (one per node) owns a bounded
// append buffer; record() is wait-free for the producer and never takes a
// lock. On overflow the newest event is dropped and counted, never silently.
//
// A process-wide emission counter gives equal-timestamp events a stable
// order; the snapshot sorts by (t, emission) which the on-disk merge rule
// (t, pid, emission) reduces to within one process.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <unistd.h>

#include "chainbench/clock.hpp"
#include "chainbench/trace_io.hpp"

namespace chainbench {

class TraceRecorder {
  static constexpr std::size_t kSegmentBits = 14;
  static constexpr std::size_t kSegmentSize = std::size_t{1} << kSegmentBits;

  struct Slot {
    Ns t;
    std::uint64_t emission;
    std::uint64_t seq;
    std::uint32_t topic;
    TraceKind kind;
    bool has_topic;
  };

 public:
  class Producer {
   public:
    void record(TraceKind kind) { record(kind, 0, 0, false); }
    void record(TraceKind kind, std::uint32_t topic_id, std::uint64_t seq) {
      record(kind, topic_id, seq, true);
    }

    // Single caller at a time per producer; concurrent with snapshot().
    void record(TraceKind kind, std::uint32_t topic_id, std::uint64_t seq, bool has_topic) {
      if (!owner_->enabled_.load(std::memory_order_relaxed)) return;
      std::size_t n = size_.load(std::memory_order_relaxed);
      if (n >= capacity_) {
        owner_->dropped_.fetch_add(1, std::memory_order_relaxed);
        return;
      }
      std::size_t seg_idx = n >> kSegmentBits;
      Slot* seg = segments_[seg_idx].load(std::memory_order_relaxed);
      if (!seg) {
        seg = new Slot[kSegmentSize];
        segments_[seg_idx].store(seg, std::memory_order_relaxed);
      }
      Slot& s = seg[n & (kSegmentSize - 1)];
      s.t = now_ns();
      s.emission = owner_->emission_.fetch_add(1, std::memory_order_relaxed);
      s.seq = seq;
      s.topic = topic_id;
      s.kind = kind;
      s.has_topic = has_topic;
      size_.store(n + 1, std::memory_order_release);
    }

    const std::string& node() const { return node_; }

    ~Producer() {
      std::size_t n = (capacity_ + kSegmentSize - 1) / kSegmentSize;
      for (std::size_t i = 0; i < n; ++i) delete[] segments_[i].load(std::memory_order_relaxed);
    }

   private:
    friend class TraceRecorder;
    Producer(TraceRecorder* owner, std::string node, std::size_t capacity)
        : owner_(owner),
          node_(std::move(node)),
          capacity_(capacity),
          segments_(new std::atomic<Slot*>[(capacity + kSegmentSize - 1) / kSegmentSize]()) {}

    TraceRecorder* owner_;
    std::string node_;
    std::size_t capacity_;
    std::unique_ptr<std::atomic<Slot*>[]> segments_;
    std::atomic<std::size_t> size_{0};
  };

  explicit TraceRecorder(std::string run_id, std::size_t capacity = std::size_t{1} << 20)
      : run_id_(std::move(run_id)), capacity_(capacity) {}

  /// Registers (or returns) the producer for a node. The pointer stays valid
  /// for the recorder's lifetime.
  Producer* producer(const std::string& node) {
    std::lock_guard lock(mutex_);
    for (auto& p : producers_)
      if (p->node_ == node) return p.get();
    producers_.emplace_back(new Producer(this, node, capacity_));
    return producers_.back().get();
  }

  /// Topic ids are interned once at wiring time so record() stays cheap.
  std::uint32_t intern_topic(const std::string& topic) {
    std::lock_guard lock(mutex_);
    auto it = topic_ids_.find(topic);
    if (it != topic_ids_.end()) return it->second;
    auto id = static_cast<std::uint32_t>(topic_names_.size());
    topic_names_.push_back(topic);
    topic_ids_.emplace(topic, id);
    return id;
  }

  const std::string& run_id() const { return run_id_; }
  std::uint64_t dropped_count() const { return dropped_.load(std::memory_order_relaxed); }

  /// Disabled recorders drop nothing and record nothing.
  void set_enabled(bool on) { enabled_.store(on, std::memory_order_relaxed); }
  bool enabled() const { return enabled_.load(std::memory_order_relaxed); }

  /// Consistent snapshot of everything recorded so far, in merge order.
  TraceLog snapshot() const {
    TraceLog log;
    log.run_id = run_id_;
    log.dropped_count = dropped_count();
    std::int64_t pid = ::getpid();

    struct Raw {
      const Slot* slot;
      const std::string* node;
    };
    std::vector<Raw> raw;
    {
      std::lock_guard lock(mutex_);
      for (const auto& p : producers_) {
        std::size_t n = p->size_.load(std::memory_order_acquire);
        for (std::size_t i = 0; i < n; ++i) {
          const Slot* seg = p->segments_[i >> kSegmentBits].load(std::memory_order_relaxed);
          raw.push_back({&seg[i & (kSegmentSize - 1)], &p->node_});
        }
      }
      std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
        if (a.slot->t != b.slot->t) return a.slot->t < b.slot->t;
        return a.slot->emission < b.slot->emission;
      });
      log.events.reserve(raw.size());
      for (const auto& r : raw) {
        TraceEvent e;
        e.t = r.slot->t;
        e.pid = pid;
        e.node = *r.node;
        e.kind = r.slot->kind;
        e.has_topic = r.slot->has_topic;
        if (e.has_topic) {
          e.topic = topic_names_.at(r.slot->topic);
          e.seq = r.slot->seq;
        }
        log.events.push_back(std::move(e));
      }
    }
    return log;
  }

 private:
  std::string run_id_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::vector<std::unique_ptr<Producer>> producers_;
  std::vector<std::string> topic_names_;
  std::map<std::string, std::uint32_t> topic_ids_;
  std::atomic<std::uint64_t> emission_{0};
  std::atomic<std::uint64_t> dropped_{0};
  std::atomic<bool> enabled_{true};
};

}  // namespace chainbench
