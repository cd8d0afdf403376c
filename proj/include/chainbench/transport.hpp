#pragma once

// Loopback transports bridging buses across processes.
//
//   best_effort  UDP datagrams, one fragment per datagram, no feedback.
//                Loss shows up as reassembly expiry on the receiver.
//   reliable     TCP stream carrying the same fragment framing, plus 16-byte
//                control packets flowing back: stop-and-wait per topic, the
//                sender retransmits on ack timeout or nack until max_retries.
//
// Fault injection sits on the receiver, in front of the reassembler
// (fragment drops) and behind it (whole-message drops), driven by a seeded
// RNG so runs are reproducible. A dropped message is never acked, which is
// what forces the reliable path to retransmit.
//
// Receivers enforce per-topic monotonicity: a message whose seq is not
// greater than the last injected one is discarded as stale, so subscribers
// never observe reordering no matter how fragments interleave.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sched.h>
#include <sys/socket.h>
#include <unistd.h>

#include "chainbench/bus.hpp"
#include "chainbench/clock.hpp"
#include "chainbench/wire.hpp"

namespace chainbench {

struct FaultPlan {
  double fragment_drop_rate = 0;
  double message_drop_rate = 0;
  std::uint64_t seed = 0;

  bool active() const { return fragment_drop_rate > 0 || message_drop_rate > 0; }
};

struct DeliveryParams {
  Ns ack_timeout = 10 * kMillisecond;
  int max_retries = 100;
  int queue_depth = 1;  // unsent backlog per topic, keep-last
  Ns connect_timeout = 10 * kSecond;
};

struct TransportCounters {
  std::atomic<std::uint64_t> sent_messages{0};
  std::atomic<std::uint64_t> sent_fragments{0};
  std::atomic<std::uint64_t> received_messages{0};
  std::atomic<std::uint64_t> stale_dropped{0};
  std::atomic<std::uint64_t> expired_messages{0};
  std::atomic<std::uint64_t> faulted_fragments{0};
  std::atomic<std::uint64_t> faulted_messages{0};
  std::atomic<std::uint64_t> retransmits{0};
  std::atomic<std::uint64_t> delivery_failures{0};
  std::atomic<std::uint64_t> acks_received{0};
  std::atomic<std::uint64_t> nacks_sent{0};
  std::atomic<std::uint64_t> sender_evictions{0};
};

namespace transport_detail {

inline sockaddr_in loopback(std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  return addr;
}

inline int bound_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) return -1;
  return ntohs(addr.sin_port);
}

inline void set_recv_timeout(int fd, Ns timeout) {
  timeval tv{};
  tv.tv_sec = timeout / kSecond;
  tv.tv_usec = (timeout % kSecond) / 1000;
  setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

inline bool read_exact(int fd, std::uint8_t* buf, std::size_t n, const std::atomic<bool>& stop) {
  std::size_t got = 0;
  while (got < n) {
    if (stop.load(std::memory_order_relaxed)) return false;
    ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r > 0) {
      got += static_cast<std::size_t>(r);
    } else if (r == 0) {
      return false;  // peer closed
    } else if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) {
      continue;
    } else {
      return false;
    }
  }
  return true;
}

inline bool write_all(int fd, const std::uint8_t* buf, std::size_t n) {
  std::size_t sent = 0;
  while (sent < n) {
    ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
    if (r > 0) {
      sent += static_cast<std::size_t>(r);
    } else if (r < 0 && (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK)) {
      continue;
    } else {
      return false;
    }
  }
  return true;
}

class FaultInjector {
 public:
  explicit FaultInjector(const FaultPlan& plan) : plan_(plan), rng_(plan.seed) {}

  bool drop_fragment() { return roll(plan_.fragment_drop_rate); }
  bool drop_message() { return roll(plan_.message_drop_rate); }

 private:
  bool roll(double rate) {
    if (rate <= 0) return false;
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < rate;
  }
  FaultPlan plan_;
  std::mt19937_64 rng_;
};

}  // namespace transport_detail

/// Resolves wire-level topic hashes back to names.
class TopicDirectory {
 public:
  void add(const std::string& topic) {
    std::lock_guard lock(mutex_);
    names_[fnv1a64(topic)] = topic;
  }
  std::optional<std::string> lookup(std::uint64_t hash) const {
    std::lock_guard lock(mutex_);
    auto it = names_.find(hash);
    if (it == names_.end()) return std::nullopt;
    return it->second;
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::uint64_t, std::string> names_;
};

namespace transport_detail {

/// Shared receive-side pipeline: fragments in, ordered envelopes into the bus.
class ReceivePipeline {
 public:
  ReceivePipeline(Bus& bus, const TopicDirectory& dir, TransportCounters& counters,
                  const FaultPlan& fault)
      : bus_(bus), dir_(dir), counters_(counters), fault_(fault) {}

  struct FeedResult {
    bool completed = false;
    bool faulted = false;
    std::uint64_t topic_hash = 0;
    std::uint64_t seq = 0;
  };

  // Faulted completions are reported so reliable receivers can withhold the ack.
  FeedResult feed(const std::uint8_t* data, std::size_t size, Ns now) {
    FeedResult result;
    if (fault_.drop_fragment()) {
      counters_.faulted_fragments.fetch_add(1, std::memory_order_relaxed);
      return result;
    }
    auto msg = reassembler_.add(data, size, now);
    if (!msg) return result;
    result.completed = true;
    result.topic_hash = msg->topic_hash;
    result.seq = msg->seq;
    if (fault_.drop_message()) {
      counters_.faulted_messages.fetch_add(1, std::memory_order_relaxed);
      result.faulted = true;
      return result;
    }
    inject(*msg);
    return result;
  }

  std::vector<ExpiredMessage> expire(Ns now) {
    auto expired = reassembler_.expire(now);
    counters_.expired_messages.fetch_add(expired.size(), std::memory_order_relaxed);
    return expired;
  }

 private:
  void inject(const AssembledMessage& msg) {
    auto topic = dir_.lookup(msg.topic_hash);
    if (!topic) return;  // not a topic of this process
    {
      std::lock_guard lock(order_mutex_);
      auto& last = last_seq_[msg.topic_hash];
      if (msg.seq <= last) {
        counters_.stale_dropped.fetch_add(1, std::memory_order_relaxed);
        return;
      }
      last = msg.seq;
    }
    Envelope env;
    env.topic = *topic;
    env.seq = msg.seq;
    env.publish_ts = msg.publish_ts;
    env.payload = std::make_shared<const std::vector<std::uint8_t>>(std::move(msg.payload));
    bus_.inject(std::move(env));
    counters_.received_messages.fetch_add(1, std::memory_order_relaxed);
  }

  Bus& bus_;
  const TopicDirectory& dir_;
  TransportCounters& counters_;
  FaultInjector fault_;
  Reassembler reassembler_;
  std::mutex order_mutex_;
  std::map<std::uint64_t, std::uint64_t> last_seq_;
};

}  // namespace transport_detail

class UdpReceiver {
 public:
  UdpReceiver(int port, Bus& bus, const TopicDirectory& dir, TransportCounters& counters,
              const FaultPlan& fault)
      : pipeline_(bus, dir, counters, fault) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw std::runtime_error("udp socket failed");
    int rcvbuf = 16 * 1024 * 1024;
    // FORCE ignores rmem_max but needs CAP_NET_ADMIN; fall back when unprivileged
    if (setsockopt(fd_, SOL_SOCKET, SO_RCVBUFFORCE, &rcvbuf, sizeof rcvbuf) != 0)
      setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &rcvbuf, sizeof rcvbuf);
    auto addr = transport_detail::loopback(static_cast<std::uint16_t>(port));
    if (bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      ::close(fd_);
      throw std::runtime_error("udp bind failed on port " + std::to_string(port));
    }
    port_ = transport_detail::bound_port(fd_);
    transport_detail::set_recv_timeout(fd_, 10 * kMillisecond);
    thread_ = std::thread([this] { loop(); });
  }

  ~UdpReceiver() { stop(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    if (thread_.joinable()) thread_.join();
    ::close(fd_);
  }

  int port() const { return port_; }

 private:
  void loop() {
    std::vector<std::uint8_t> buf(kFragmentHeaderSize + kMaxFragmentPayload + 8);
    while (!stopping_.load(std::memory_order_relaxed)) {
      ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
      Ns now = now_ns();
      if (n > 0) pipeline_.feed(buf.data(), static_cast<std::size_t>(n), now);
      pipeline_.expire(now);
    }
  }

  transport_detail::ReceivePipeline pipeline_;
  int fd_ = -1;
  int port_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

class UdpSender {
 public:
  explicit UdpSender(int dest_port, TransportCounters& counters) : counters_(counters) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw std::runtime_error("udp socket failed");
    dest_ = transport_detail::loopback(static_cast<std::uint16_t>(dest_port));
  }

  ~UdpSender() { ::close(fd_); }

  void send(std::uint64_t topic_hash, const Envelope& env) {
    auto frags = encode_fragments(topic_hash, env.seq, env.publish_ts, env.payload->data(),
                                  env.payload->size());
    int burst = 0;
    for (const auto& f : frags) {
      ::sendto(fd_, f.data(), f.size(), 0, reinterpret_cast<const sockaddr*>(&dest_),
               sizeof dest_);
      // large messages pace themselves so a same-host receiver can drain even
      // when rmem_max caps the socket buffer well below the message size
      if (++burst % 3 == 0) sched_yield();
      if (burst % 48 == 0) std::this_thread::sleep_for(std::chrono::microseconds(500));
    }
    counters_.sent_messages.fetch_add(1, std::memory_order_relaxed);
    counters_.sent_fragments.fetch_add(frags.size(), std::memory_order_relaxed);
  }

 private:
  TransportCounters& counters_;
  int fd_ = -1;
  sockaddr_in dest_{};
};

/// Accepts reliable-mode connections; acks completed messages, nacks expired
/// reassemblies, never acks fault-dropped ones.
class TcpReceiver {
 public:
  TcpReceiver(int port, Bus& bus, const TopicDirectory& dir, TransportCounters& counters,
              const FaultPlan& fault)
      : bus_(bus), dir_(dir), counters_(counters), fault_(fault) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("tcp socket failed");
    int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    auto addr = transport_detail::loopback(static_cast<std::uint16_t>(port));
    if (bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || listen(fd_, 64) != 0) {
      ::close(fd_);
      throw std::runtime_error("tcp bind/listen failed on port " + std::to_string(port));
    }
    port_ = transport_detail::bound_port(fd_);
    transport_detail::set_recv_timeout(fd_, 50 * kMillisecond);
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  ~TcpReceiver() { stop(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(fd_, SHUT_RDWR);
    if (accept_thread_.joinable()) accept_thread_.join();
    {
      std::lock_guard lock(mutex_);
      for (int cfd : connections_) ::shutdown(cfd, SHUT_RDWR);
    }
    for (auto& t : readers_)
      if (t.joinable()) t.join();
    {
      std::lock_guard lock(mutex_);
      for (int cfd : connections_) ::close(cfd);
      connections_.clear();
    }
    ::close(fd_);
  }

  int port() const { return port_; }

 private:
  void accept_loop() {
    while (!stopping_.load(std::memory_order_relaxed)) {
      int cfd = ::accept(fd_, nullptr, nullptr);
      if (cfd < 0) {
        if (stopping_.load(std::memory_order_relaxed)) return;
        continue;
      }
      int one = 1;
      setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      transport_detail::set_recv_timeout(cfd, 10 * kMillisecond);
      std::lock_guard lock(mutex_);
      connections_.push_back(cfd);
      readers_.emplace_back([this, cfd] { read_loop(cfd); });
    }
  }

  void read_loop(int cfd) {
    transport_detail::ReceivePipeline pipeline(bus_, dir_, counters_, fault_);
    std::vector<std::uint8_t> frame(kFragmentHeaderSize + kMaxFragmentPayload + 8);
    while (!stopping_.load(std::memory_order_relaxed)) {
      if (!transport_detail::read_exact(cfd, frame.data(), kFragmentHeaderSize, stopping_)) {
        for (const auto& ex : pipeline.expire(now_ns() + 2 * kReassemblyWindowNs))
          send_nack(cfd, ex);
        return;
      }
      auto header = decode_fragment_header(frame.data(), kFragmentHeaderSize);
      if (!header) return;
      std::size_t body =
          fragment_payload_size(*header) + (fragment_has_timestamp(*header) ? 8 : 0);
      if (kFragmentHeaderSize + body > frame.size()) return;  // corrupt framing
      if (body &&
          !transport_detail::read_exact(cfd, frame.data() + kFragmentHeaderSize, body, stopping_))
        return;

      Ns now = now_ns();
      auto fed = pipeline.feed(frame.data(), kFragmentHeaderSize + body, now);
      if (fed.completed && !fed.faulted) {
        auto ack = encode_ack(fed.topic_hash, fed.seq);
        std::lock_guard lock(write_mutex_);
        transport_detail::write_all(cfd, ack.data(), ack.size());
      }
      for (const auto& ex : pipeline.expire(now)) send_nack(cfd, ex);
    }
  }

  void send_nack(int cfd, const ExpiredMessage& ex) {
    auto nack = encode_nack(ex.topic_hash, ex.seq);
    counters_.nacks_sent.fetch_add(1, std::memory_order_relaxed);
    std::lock_guard lock(write_mutex_);
    transport_detail::write_all(cfd, nack.data(), nack.size());
  }

  Bus& bus_;
  const TopicDirectory& dir_;
  TransportCounters& counters_;
  FaultPlan fault_;
  int fd_ = -1;
  int port_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex mutex_;
  std::mutex write_mutex_;
  std::vector<int> connections_;
  std::vector<std::thread> readers_;
};

/// One reliable connection to a peer process; stop-and-wait per topic.
class TcpSender {
 public:
  TcpSender(int dest_port, DeliveryParams params, TransportCounters& counters)
      : params_(params), counters_(counters), dest_port_(dest_port) {
    writer_ = std::thread([this] { writer_loop(); });
  }

  ~TcpSender() { stop(); }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      if (stopping_) return;
      stopping_ = true;
    }
    stopping_atomic_.store(true, std::memory_order_relaxed);
    cv_.notify_all();
    int fd = fd_.load(std::memory_order_relaxed);
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    if (writer_.joinable()) writer_.join();
    if (reader_.joinable()) reader_.join();
    fd = fd_.load(std::memory_order_relaxed);
    if (fd >= 0) ::close(fd);
  }

  void send(std::uint64_t topic_hash, const Envelope& env) {
    auto frags = encode_fragments(topic_hash, env.seq, env.publish_ts, env.payload->data(),
                                  env.payload->size());
    std::lock_guard lock(mutex_);
    auto& chan = channels_[topic_hash];
    if (chan.backlog.size() >= static_cast<std::size_t>(params_.queue_depth)) {
      chan.backlog.pop_front();  // keep-last under backpressure
      counters_.sender_evictions.fetch_add(1, std::memory_order_relaxed);
    }
    chan.backlog.push_back({env.seq, std::move(frags)});
    counters_.sent_messages.fetch_add(1, std::memory_order_relaxed);
    cv_.notify_all();
  }

  bool connected() const { return connected_.load(std::memory_order_relaxed); }

 private:
  struct Outgoing {
    std::uint64_t seq = 0;
    std::vector<std::vector<std::uint8_t>> fragments;
  };
  struct Channel {
    std::deque<Outgoing> backlog;
    std::optional<Outgoing> in_flight;
    int retries = 0;
    Ns sent_at = 0;
  };

  bool connect_with_retry() {
    Ns deadline = now_ns() + params_.connect_timeout;
    while (now_ns() < deadline) {
      {
        std::lock_guard lock(mutex_);
        if (stopping_) return false;
      }
      int fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (fd < 0) return false;
      auto addr = transport_detail::loopback(static_cast<std::uint16_t>(dest_port_));
      if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
        int one = 1;
        setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        transport_detail::set_recv_timeout(fd, 50 * kMillisecond);
        fd_.store(fd, std::memory_order_relaxed);
        connected_.store(true, std::memory_order_relaxed);
        return true;
      }
      ::close(fd);
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return false;
  }

  void writer_loop() {
    if (!connect_with_retry()) {
      std::unique_lock lock(mutex_);
      // everything ever queued counts as failed
      for (auto& [hash, chan] : channels_) {
        counters_.delivery_failures.fetch_add(chan.backlog.size(), std::memory_order_relaxed);
        chan.backlog.clear();
      }
      return;
    }
    reader_ = std::thread([this] { reader_loop(); });

    std::unique_lock lock(mutex_);
    while (!stopping_) {
      Ns now = now_ns();
      Ns next_deadline = now + kSecond;
      bool work = false;

      for (auto& [hash, chan] : channels_) {
        if (!chan.in_flight && !chan.backlog.empty()) {
          chan.in_flight = std::move(chan.backlog.front());
          chan.backlog.pop_front();
          chan.retries = 0;
          send_fragments(lock, hash, *chan.in_flight);
          chan.sent_at = now_ns();
          work = true;
        }
        if (chan.in_flight) {
          Ns deadline = chan.sent_at + params_.ack_timeout;
          if (now >= deadline) {
            if (chan.retries >= params_.max_retries) {
              counters_.delivery_failures.fetch_add(1, std::memory_order_relaxed);
              std::fprintf(stderr, "reliable delivery failed after %d retries (seq %llu)\n",
                           chan.retries,
                           static_cast<unsigned long long>(chan.in_flight->seq));
              chan.in_flight.reset();
              work = true;
            } else {
              ++chan.retries;
              counters_.retransmits.fetch_add(1, std::memory_order_relaxed);
              send_fragments(lock, hash, *chan.in_flight);
              chan.sent_at = now_ns();
              deadline = chan.sent_at + params_.ack_timeout;
            }
          }
          next_deadline = std::min(next_deadline, deadline);
        }
      }
      if (work) continue;
      cv_.wait_until(lock, std::chrono::steady_clock::time_point(
                               std::chrono::nanoseconds(next_deadline)));
    }
  }

  // called with mutex held; unlocks around blocking writes
  void send_fragments(std::unique_lock<std::mutex>& lock, std::uint64_t hash,
                      const Outgoing& out) {
    (void)hash;
    auto fragments = out.fragments;  // copy so the write happens unlocked
    int fd = fd_.load(std::memory_order_relaxed);
    lock.unlock();
    for (const auto& f : fragments) {
      if (!transport_detail::write_all(fd, f.data(), f.size())) break;
      counters_.sent_fragments.fetch_add(1, std::memory_order_relaxed);
    }
    lock.lock();
  }

  void reader_loop() {
    std::uint8_t buf[16];
    int fd = fd_.load(std::memory_order_relaxed);
    while (!stopping_atomic_.load(std::memory_order_relaxed)) {
      if (!transport_detail::read_exact(fd, buf, sizeof buf, stopping_atomic_)) return;
      auto control = decode_control(buf, sizeof buf);
      if (!control) continue;
      std::lock_guard lock(mutex_);
      auto it = channels_.find(control->topic_hash);
      if (it == channels_.end() || !it->second.in_flight) continue;
      Channel& chan = it->second;
      if (control->is_nack) {
        // retransmit immediately on next writer pass
        if (chan.in_flight->seq == control->seq) chan.sent_at = 0;
      } else {
        counters_.acks_received.fetch_add(1, std::memory_order_relaxed);
        if (chan.in_flight->seq <= control->seq) chan.in_flight.reset();
      }
      cv_.notify_all();
    }
  }

  DeliveryParams params_;
  TransportCounters& counters_;
  int dest_port_;
  std::atomic<int> fd_{-1};
  std::atomic<bool> connected_{false};
  std::atomic<bool> stopping_atomic_{false};
  std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::uint64_t, Channel> channels_;
  bool stopping_ = false;
  std::thread writer_;
  std::thread reader_;
};

/// Wires one process's bus to its peers: listeners for inbound topics,
/// per-destination senders hooked in as remote sinks.
class TransportHub {
 public:
  explicit TransportHub(Bus& bus) : bus_(bus) {}

  ~TransportHub() { stop(); }

  void add_topic(const std::string& topic) { directory_.add(topic); }

  /// port 0 binds an ephemeral port; returns the actual one.
  int listen_udp(int port, const FaultPlan& fault = {}) {
    udp_receivers_.push_back(
        std::make_unique<UdpReceiver>(port, bus_, directory_, counters_, fault));
    return udp_receivers_.back()->port();
  }

  int listen_tcp(int port, const FaultPlan& fault = {}) {
    tcp_receivers_.push_back(
        std::make_unique<TcpReceiver>(port, bus_, directory_, counters_, fault));
    return tcp_receivers_.back()->port();
  }

  /// Every local publish on `topic` is exported best-effort to dest_port.
  void export_topic_udp(const std::string& topic, int dest_port) {
    directory_.add(topic);
    auto key = dest_port;
    auto it = udp_senders_.find(key);
    if (it == udp_senders_.end())
      it = udp_senders_.emplace(key, std::make_unique<UdpSender>(dest_port, counters_)).first;
    UdpSender* sender = it->second.get();
    std::uint64_t hash = fnv1a64(topic);
    bus_.add_remote_sink(topic, [sender, hash](const Envelope& env) { sender->send(hash, env); });
  }

  void export_topic_tcp(const std::string& topic, int dest_port,
                        const DeliveryParams& params = {}) {
    directory_.add(topic);
    auto it = tcp_senders_.find(dest_port);
    if (it == tcp_senders_.end())
      it = tcp_senders_
               .emplace(dest_port, std::make_unique<TcpSender>(dest_port, params, counters_))
               .first;
    TcpSender* sender = it->second.get();
    std::uint64_t hash = fnv1a64(topic);
    bus_.add_remote_sink(topic, [sender, hash](const Envelope& env) { sender->send(hash, env); });
  }

  void stop() {
    for (auto& r : udp_receivers_) r->stop();
    for (auto& r : tcp_receivers_) r->stop();
    for (auto& [port, s] : tcp_senders_) s->stop();
  }

  const TransportCounters& counters() const { return counters_; }

 private:
  Bus& bus_;
  TopicDirectory directory_;
  TransportCounters counters_;
  std::vector<std::unique_ptr<UdpReceiver>> udp_receivers_;
  std::vector<std::unique_ptr<TcpReceiver>> tcp_receivers_;
  std::map<int, std::unique_ptr<UdpSender>> udp_senders_;
  std::map<int, std::unique_ptr<TcpSender>> tcp_senders_;
};

}  // namespace chainbench
