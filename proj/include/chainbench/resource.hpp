#pragma once

// Periodic per-process CPU and resident-memory sampling from /proc. One
// sampler owns a background thread ticking at a fixed cadence (default 200 ms)
// and accumulates samples for an explicit watch set of pids.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "chainbench/clock.hpp"

namespace chainbench {

struct ProcessUsage {
  std::int64_t pid = 0;
  std::string tag;            // owner label, e.g. the module the pid hosts
  double cpu_percent = 0;     // 100 == one core fully busy
  std::uint64_t rss_bytes = 0;
};

struct ResourceSample {
  Ns t = 0;
  std::vector<ProcessUsage> processes;
};

namespace resource_detail {

struct CpuReading {
  std::uint64_t ticks = 0;   // utime + stime
  std::uint64_t rss_pages = 0;
};

/// Parses /proc/<pid>/stat. The comm field may hold spaces and parentheses;
/// everything after the last ')' is whitespace-delimited.
inline std::optional<CpuReading> read_proc_stat(std::int64_t pid) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/stat");
  if (!in) return std::nullopt;
  std::string content;
  std::getline(in, content);
  auto close = content.rfind(')');
  if (close == std::string::npos) return std::nullopt;
  std::istringstream rest(content.substr(close + 1));
  // fields after comm: state(3) ppid pgrp session tty tpgid flags minflt
  // cminflt majflt cmajflt utime(14) stime(15) ... rss(24)
  std::string state;
  rest >> state;
  std::uint64_t num = 0;
  std::uint64_t utime = 0, stime = 0;
  std::int64_t snum = 0;
  for (int field = 4; field <= 13; ++field) rest >> num;
  rest >> utime >> stime;
  for (int field = 16; field <= 23; ++field) rest >> snum;
  std::int64_t rss = 0;
  rest >> rss;
  if (!rest) return std::nullopt;
  CpuReading r;
  r.ticks = utime + stime;
  r.rss_pages = rss > 0 ? static_cast<std::uint64_t>(rss) : 0;
  return r;
}

}  // namespace resource_detail

class ResourceSampler {
 public:
  explicit ResourceSampler(Ns interval = 200 * kMillisecond) : interval_(interval) {
    clk_tck_ = static_cast<double>(sysconf(_SC_CLK_TCK));
    page_size_ = static_cast<std::uint64_t>(sysconf(_SC_PAGESIZE));
  }

  ~ResourceSampler() { stop(); }

  void watch(std::int64_t pid, std::string tag) {
    std::lock_guard lk(mutex_);
    watched_[pid] = Watch{std::move(tag), std::nullopt, false};
  }

  void start() {
    bool expected = false;
    if (!running_.compare_exchange_strong(expected, true)) return;
    thread_ = std::thread([this] { run(); });
  }

  void stop() {
    {
      std::lock_guard lk(mutex_);
      if (!running_.load()) return;
      running_.store(false);
      cv_.notify_all();
    }
    if (thread_.joinable()) thread_.join();
  }

  /// One synchronous tick; usable without start() for driver-paced sampling.
  void sample_once() { tick(now_ns()); }

  std::vector<ResourceSample> samples() const {
    std::lock_guard lk(mutex_);
    return samples_;
  }

  std::vector<std::string> warnings() const {
    std::lock_guard lk(mutex_);
    return warnings_;
  }

  Ns interval() const { return interval_; }

  /// Mean of per-sample total cpu_percent across all non-priming samples.
  double mean_total_cpu() const {
    std::lock_guard lk(mutex_);
    if (samples_.empty()) return 0;
    double sum = 0;
    std::size_t n = 0;
    for (const auto& s : samples_) {
      if (s.processes.empty()) continue;
      double total = 0;
      for (const auto& p : s.processes) total += p.cpu_percent;
      sum += total;
      ++n;
    }
    return n ? sum / static_cast<double>(n) : 0;
  }

 private:
  struct Watch {
    std::string tag;
    std::optional<resource_detail::CpuReading> last;
    bool gone = false;
  };

  void run() {
    Ns next = now_ns() + interval_;
    std::unique_lock lk(mutex_);
    while (running_.load()) {
      auto deadline = std::chrono::steady_clock::time_point(std::chrono::nanoseconds(next));
      if (cv_.wait_until(lk, deadline, [this] { return !running_.load(); })) break;
      lk.unlock();
      Ns t = now_ns();
      tick(t);
      lk.lock();
      next += interval_;
      if (next < t) next = t + interval_;  // fell behind: realign, keep cadence
    }
  }

  void tick(Ns t) {
    std::lock_guard lk(mutex_);
    ResourceSample sample;
    sample.t = t;
    for (auto& [pid, watch] : watched_) {
      if (watch.gone) continue;
      auto reading = resource_detail::read_proc_stat(pid);
      if (!reading) {
        watch.gone = true;
        warnings_.push_back("pid " + std::to_string(pid) + " (" + watch.tag +
                            ") exited during sampling");
        continue;
      }
      if (watch.last && last_t_) {
        double wall_s = static_cast<double>(t - *last_t_) / 1e9;
        if (wall_s > 0) {
          double cpu_s =
              static_cast<double>(reading->ticks - watch.last->ticks) / clk_tck_;
          ProcessUsage u;
          u.pid = pid;
          u.tag = watch.tag;
          u.cpu_percent = 100.0 * cpu_s / wall_s;
          u.rss_bytes = reading->rss_pages * page_size_;
          sample.processes.push_back(std::move(u));
        }
      }
      watch.last = reading;
    }
    last_t_ = t;
    samples_.push_back(std::move(sample));
  }

  Ns interval_;
  double clk_tck_ = 100;
  std::uint64_t page_size_ = 4096;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::atomic<bool> running_{false};
  std::thread thread_;
  std::map<std::int64_t, Watch> watched_;
  std::optional<Ns> last_t_;
  std::vector<ResourceSample> samples_;
  std::vector<std::string> warnings_;
};

/// Median gap between consecutive sample timestamps, in ns.
inline Ns median_sample_gap(const std::vector<ResourceSample>& samples) {
  if (samples.size() < 2) return 0;
  std::vector<Ns> gaps;
  for (std::size_t i = 1; i < samples.size(); ++i)
    gaps.push_back(samples[i].t - samples[i - 1].t);
  std::sort(gaps.begin(), gaps.end());
  return gaps[gaps.size() / 2];
}

}  // namespace chainbench
