#pragma once

// Task execution for node callbacks.
//
// Every node owns a Domain: a FIFO of tasks with the guarantee that at most
// one task of the domain runs at any time, on whichever pool thread picks it
// up. Domains are independent, so the pool size trades parallelism without
// affecting per-node serialization. A domain sits in the ready queue at most
// once; the worker that drains a task re-arms the domain if more tasks wait.
//
// TimerService drives periodic callbacks on a dedicated thread. Firing k
// targets t0 + k*period (computed from t0, so no drift accumulates). A
// firing whose predecessor has not started yet is coalesced away: at most
// one fired-but-unstarted task per timer. Targets that pass while the
// service is behind are skipped, not replayed.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

#include "chainbench/clock.hpp"

namespace chainbench {

class Executor {
 public:
  class Domain {
   public:
    void post(std::function<void()> task) {
      bool arm = false;
      {
        std::lock_guard lock(mutex_);
        if (owner_->stopping_.load(std::memory_order_relaxed)) return;
        tasks_.push_back(std::move(task));
        if (!scheduled_) {
          scheduled_ = true;
          arm = true;
        }
      }
      if (arm) owner_->enqueue_ready(this);
    }

    std::size_t pending() const {
      std::lock_guard lock(mutex_);
      return tasks_.size();
    }

   private:
    friend class Executor;
    explicit Domain(Executor* owner) : owner_(owner) {}

    Executor* owner_;
    mutable std::mutex mutex_;
    std::deque<std::function<void()>> tasks_;
    bool scheduled_ = false;
  };

  explicit Executor(unsigned threads = default_thread_count()) {
    if (threads == 0) threads = 1;
    for (unsigned i = 0; i < threads; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  ~Executor() { stop(); }

  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  Domain* domain() {
    std::lock_guard lock(mutex_);
    domains_.emplace_back(new Domain(this));
    return domains_.back().get();
  }

  /// Workers finish their in-flight task; queued tasks are discarded.
  void stop() {
    {
      std::lock_guard lock(mutex_);
      if (stopping_.exchange(true)) return;
    }
    cv_.notify_all();
    for (auto& w : workers_)
      if (w.joinable()) w.join();
  }

  /// Blocks until every domain queue is empty and nothing is running.
  void drain() {
    std::unique_lock lock(mutex_);
    drain_cv_.wait(lock, [this] { return ready_.empty() && active_ == 0; });
  }

  static unsigned default_thread_count() {
    unsigned hw = std::thread::hardware_concurrency();
    return hw < 2 ? 2 : hw;
  }

 private:
  void enqueue_ready(Domain* d) {
    {
      std::lock_guard lock(mutex_);
      ready_.push_back(d);
    }
    cv_.notify_one();
  }

  void worker_loop() {
    for (;;) {
      Domain* d;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] {
          return stopping_.load(std::memory_order_relaxed) || !ready_.empty();
        });
        if (stopping_.load(std::memory_order_relaxed)) return;
        d = ready_.front();
        ready_.pop_front();
        ++active_;
      }

      std::function<void()> task;
      {
        std::lock_guard lock(d->mutex_);
        task = std::move(d->tasks_.front());
        d->tasks_.pop_front();
      }
      task();

      bool rearm = false;
      {
        std::lock_guard lock(d->mutex_);
        if (d->tasks_.empty())
          d->scheduled_ = false;
        else
          rearm = true;
      }
      {
        std::lock_guard lock(mutex_);
        if (rearm) ready_.push_back(d);
        --active_;
        if (ready_.empty() && active_ == 0) drain_cv_.notify_all();
      }
      if (rearm) cv_.notify_one();
    }
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable drain_cv_;
  std::deque<Domain*> ready_;
  std::vector<std::unique_ptr<Domain>> domains_;
  std::vector<std::thread> workers_;
  std::atomic<bool> stopping_{false};
  unsigned active_ = 0;
};

class TimerService {
 public:
  TimerService() = default;
  ~TimerService() { stop(); }

  TimerService(const TimerService&) = delete;
  TimerService& operator=(const TimerService&) = delete;

  /// Registers a timer; nothing fires until start().
  void add_timer(Ns period, Executor::Domain* domain, std::function<void()> fire) {
    std::lock_guard lock(mutex_);
    timers_.push_back(std::make_unique<Timer>());
    timers_.back()->period = period;
    timers_.back()->domain = domain;
    timers_.back()->fire = std::move(fire);
  }

  /// Arms every timer against a common t0 = now and starts the thread.
  void start() {
    std::lock_guard lock(mutex_);
    if (running_) return;
    running_ = true;
    t0_ = now_ns();
    for (auto& t : timers_) {
      t->k = 1;
      heap_.push({t0_ + t->period, t.get()});
    }
    thread_ = std::thread([this] { loop(); });
  }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      if (!running_) return;
      running_ = false;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

  Ns t0() const { return t0_; }

 private:
  struct Timer {
    Ns period = 0;
    Executor::Domain* domain = nullptr;
    std::function<void()> fire;
    std::uint64_t k = 1;
    std::shared_ptr<std::atomic<bool>> pending = std::make_shared<std::atomic<bool>>(false);
  };
  struct Due {
    Ns target;
    Timer* timer;
    bool operator>(const Due& o) const { return target > o.target; }
  };

  void loop() {
    std::unique_lock lock(mutex_);
    while (running_) {
      if (heap_.empty()) {
        cv_.wait(lock, [this] { return !running_ || !heap_.empty(); });
        continue;
      }
      Ns target = heap_.top().target;
      Ns now = now_ns();
      if (now < target) {
        auto tp = std::chrono::steady_clock::time_point(std::chrono::nanoseconds(target));
        cv_.wait_until(lock, tp);
        continue;
      }

      Due due = heap_.top();
      heap_.pop();
      Timer* t = due.timer;
      if (!t->pending->exchange(true)) {
        auto pending = t->pending;
        auto fire = t->fire;
        t->domain->post([pending, fire] {
          pending->store(false);
          fire();
        });
      }
      // next target strictly in the future; late targets are skipped
      std::uint64_t k_next = t->k + 1;
      std::uint64_t k_min = static_cast<std::uint64_t>((now - t0_) / t->period) + 1;
      t->k = k_next > k_min ? k_next : k_min;
      heap_.push({t0_ + static_cast<Ns>(t->k) * t->period, t});
    }
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<Timer>> timers_;
  std::priority_queue<Due, std::vector<Due>, std::greater<Due>> heap_;
  std::thread thread_;
  bool running_ = false;
  Ns t0_ = 0;
};

}  // namespace chainbench
