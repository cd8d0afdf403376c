#include <catch2/catch_amalgamated.hpp>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "chainbench/resource.hpp"

using namespace chainbench;

namespace {

pid_t spawn_spinner() {
  pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    volatile std::uint64_t x = 0;
    for (;;) ++x;
  }
  return pid;
}

pid_t spawn_sleeper() {
  pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(10));
  }
  return pid;
}

void reap(pid_t pid) {
  kill(pid, SIGKILL);
  int status = 0;
  waitpid(pid, &status, 0);
}

}  // namespace

TEST_CASE("proc stat parsing reads this process") {
  auto r = resource_detail::read_proc_stat(getpid());
  REQUIRE(r.has_value());
  REQUIRE(r->rss_pages > 0);
}

TEST_CASE("sampling cadence holds its 200 ms target") {
  ResourceSampler sampler;  // default 200 ms
  sampler.watch(getpid(), "self");
  sampler.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(1700));
  sampler.stop();

  auto samples = sampler.samples();
  REQUIRE(samples.size() >= 6);
  Ns median = median_sample_gap(samples);
  REQUIRE(median >= 160 * kMillisecond);
  REQUIRE(median <= 240 * kMillisecond);
}

TEST_CASE("an idle child samples near zero cpu") {
  pid_t pid = spawn_sleeper();
  ResourceSampler sampler(100 * kMillisecond);
  sampler.watch(pid, "sleeper");
  sampler.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(700));
  sampler.stop();
  reap(pid);

  auto samples = sampler.samples();
  std::size_t measured = 0;
  for (const auto& s : samples) {
    for (const auto& p : s.processes) {
      REQUIRE(p.pid == pid);
      REQUIRE(p.tag == "sleeper");
      REQUIRE(p.cpu_percent < 2.0);
      REQUIRE(p.rss_bytes > 0);
      ++measured;
    }
  }
  REQUIRE(measured >= 3);
}

TEST_CASE("a busy spinner measures close to one full core") {
  pid_t pid = spawn_spinner();
  ResourceSampler sampler(200 * kMillisecond);
  sampler.watch(pid, "spinner");
  sampler.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(1500));
  sampler.stop();
  reap(pid);

  double mean = sampler.mean_total_cpu();
  REQUIRE(mean >= 90.0);
  REQUIRE(mean <= 110.0);
}

TEST_CASE("a watched process exiting is noted, not fatal") {
  pid_t pid = spawn_sleeper();
  ResourceSampler sampler(50 * kMillisecond);
  sampler.watch(pid, "doomed");
  sampler.watch(getpid(), "self");
  sampler.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  reap(pid);
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  sampler.stop();

  auto warnings = sampler.warnings();
  REQUIRE(warnings.size() == 1);
  REQUIRE(warnings[0].find("doomed") != std::string::npos);

  // self keeps being sampled after the child vanishes
  auto samples = sampler.samples();
  bool self_after = false;
  for (const auto& s : samples)
    for (const auto& p : s.processes)
      if (p.tag == "self" && s.t > samples.front().t + 300 * kMillisecond) self_after = true;
  REQUIRE(self_after);
}

TEST_CASE("driver-paced sampling works without the background thread") {
  ResourceSampler sampler;
  sampler.watch(getpid(), "self");
  sampler.sample_once();
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  sampler.sample_once();
  auto samples = sampler.samples();
  REQUIRE(samples.size() == 2);
  REQUIRE(samples[0].processes.empty());  // priming tick
  REQUIRE(samples[1].processes.size() == 1);
}
