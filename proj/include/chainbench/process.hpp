#pragma once

// OS process plumbing: spawning children into their own process groups with
// optional CPU affinity and cgroup membership, free-port probing, and
// group-wide termination with escalation.

#include <fcntl.h>
#include <netinet/in.h>
#include <sched.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "chainbench/clock.hpp"

extern char** environ;

namespace chainbench {

struct SpawnSpec {
  std::string executable;
  std::vector<std::string> args;                       // argv[1..]
  std::vector<std::pair<std::string, std::string>> env;  // additions/overrides
  std::vector<int> affinity_cpus;                      // empty = inherit
};

namespace process_detail {

inline std::vector<std::string> merged_environment(
    const std::vector<std::pair<std::string, std::string>>& extra) {
  std::vector<std::string> env;
  for (char** e = environ; *e; ++e) {
    std::string entry(*e);
    auto eq = entry.find('=');
    std::string key = entry.substr(0, eq);
    bool overridden = false;
    for (const auto& [k, v] : extra)
      if (k == key) overridden = true;
    if (!overridden) env.push_back(std::move(entry));
  }
  for (const auto& [k, v] : extra) env.push_back(k + "=" + v);
  return env;
}

}  // namespace process_detail

/// Forks and execs into a fresh process group; returns the child pid, which
/// is also the child's pgid. Throws on fork failure; exec failure surfaces as
/// child exit code 127.
inline pid_t spawn_process(const SpawnSpec& spec) {
  // argv/envp built before fork: only async-signal-safe work after it
  std::vector<std::string> env = process_detail::merged_environment(spec.env);
  std::vector<char*> argv;
  argv.push_back(const_cast<char*>(spec.executable.c_str()));
  for (const auto& a : spec.args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  std::vector<char*> envp;
  for (const auto& e : env) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);

  cpu_set_t cpus;
  CPU_ZERO(&cpus);
  for (int c : spec.affinity_cpus) CPU_SET(c, &cpus);

  pid_t pid = fork();
  if (pid < 0) throw std::runtime_error(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    setpgid(0, 0);
    if (!spec.affinity_cpus.empty()) sched_setaffinity(0, sizeof cpus, &cpus);
    execve(spec.executable.c_str(), argv.data(), envp.data());
    _exit(127);
  }
  setpgid(pid, pid);  // parent side too: closes the startup race
  return pid;
}

/// Binds an ephemeral loopback port of the requested type and releases it.
/// The caller owns the returned fd until every port is probed, preventing
/// the kernel from handing out duplicates within one probing batch.
struct ProbedPort {
  int port = 0;
  int fd = -1;
};

inline ProbedPort probe_free_port(bool tcp) {
  int fd = ::socket(AF_INET, tcp ? SOCK_STREAM : SOCK_DGRAM, 0);
  if (fd < 0) throw std::runtime_error("socket: " + std::string(std::strerror(errno)));
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    int err = errno;
    ::close(fd);
    throw std::runtime_error("bind: " + std::string(std::strerror(err)));
  }
  socklen_t len = sizeof addr;
  getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return {ntohs(addr.sin_port), fd};
}

inline bool group_alive(pid_t pgid) {
  return kill(-pgid, 0) == 0 || errno == EPERM;
}

/// Non-blocking single reap; exit code, 128+signal, or nullopt if running.
inline std::optional<int> try_reap(pid_t pid) {
  int status = 0;
  pid_t r = waitpid(pid, &status, WNOHANG);
  if (r == 0) return std::nullopt;
  if (r < 0) return 128;  // already reaped elsewhere or vanished
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return 128;
}

struct TerminationResult {
  int exit_code = -1;
  bool forced = false;  // needed SIGKILL escalation
};

/// SIGTERM to the whole group, graceful wait, then SIGKILL escalation.
inline TerminationResult terminate_group(pid_t pid, pid_t pgid, Ns grace) {
  TerminationResult result;
  kill(-pgid, SIGTERM);
  Ns deadline = now_ns() + grace;
  while (now_ns() < deadline) {
    if (auto code = try_reap(pid)) {
      result.exit_code = *code;
      return result;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  result.forced = true;
  kill(-pgid, SIGKILL);
  int status = 0;
  waitpid(pid, &status, 0);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status)
                     : WIFSIGNALED(status) ? 128 + WTERMSIG(status)
                                           : 128;
  return result;
}

/// Membership in a freshly created cpu-controller cgroup (no limits written,
/// matching a default scheduler setup); removal on scope destruction. Every
/// failure downgrades to a warning, never an error.
class CgroupScope {
 public:
  static bool supported() {
    std::error_code ec;
    auto probe = std::filesystem::path(kRoot) / "chainbench-probe";
    if (!std::filesystem::create_directory(probe, ec) && !std::filesystem::exists(probe))
      return false;
    std::filesystem::remove(probe, ec);
    return true;
  }

  explicit CgroupScope(const std::string& name) {
    std::error_code ec;
    path_ = std::filesystem::path(kRoot) / name;
    if (!std::filesystem::create_directory(path_, ec) && !std::filesystem::exists(path_)) {
      warning_ = "cgroup create failed for " + path_.string() + ": " + ec.message();
      path_.clear();
    }
  }

  CgroupScope(const CgroupScope&) = delete;
  CgroupScope& operator=(const CgroupScope&) = delete;
  CgroupScope(CgroupScope&& other) noexcept { *this = std::move(other); }
  CgroupScope& operator=(CgroupScope&& other) noexcept {
    if (this != &other) {
      release();
      path_ = std::move(other.path_);
      warning_ = std::move(other.warning_);
      other.path_.clear();
    }
    return *this;
  }

  ~CgroupScope() { release(); }

  bool active() const { return !path_.empty(); }
  const std::string& warning() const { return warning_; }

  bool add_pid(pid_t pid) {
    if (!active()) return false;
    std::ofstream procs(path_ / "cgroup.procs");
    procs << pid << '\n';
    procs.flush();
    if (!procs) {
      warning_ = "cgroup assignment failed for pid " + std::to_string(pid);
      return false;
    }
    return true;
  }

 private:
  void release() {
    if (path_.empty()) return;
    // removal only succeeds once members exited; brief retry covers reaping lag
    for (int attempt = 0; attempt < 20; ++attempt) {
      std::error_code ec;
      if (std::filesystem::remove(path_, ec) || !std::filesystem::exists(path_)) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    path_.clear();
  }

  static constexpr const char* kRoot = "/sys/fs/cgroup/cpu";
  std::filesystem::path path_;
  std::string warning_;
};

}  // namespace chainbench
