#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "chainbench/bus.hpp"
#include "chainbench/exec.hpp"
#include "chainbench/trace.hpp"
#include "chainbench/transport.hpp"
#include "chainbench/wire.hpp"

using namespace chainbench;

namespace {

// one simulated process: executor + recorder + bus
struct Endpoint {
  Executor executor{2};
  TraceRecorder recorder{"transport-test"};
  Bus bus{executor, recorder};
  TransportHub hub{bus};

  ~Endpoint() {
    hub.stop();
    executor.stop();
  }
};

struct Inbox {
  std::mutex mutex;
  std::vector<Envelope> got;

  std::size_t size() {
    std::lock_guard lock(mutex);
    return got.size();
  }
  std::vector<std::uint64_t> seqs() {
    std::lock_guard lock(mutex);
    std::vector<std::uint64_t> out;
    for (const auto& e : got) out.push_back(e.seq);
    return out;
  }
};

bool wait_for(const std::function<bool()>& pred, Ns budget = 10 * kSecond) {
  Ns deadline = now_ns() + budget;
  while (now_ns() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  return pred();
}

std::vector<std::uint8_t> pattern_payload(std::size_t size, std::uint64_t salt) {
  std::vector<std::uint8_t> payload(size);
  for (std::size_t i = 0; i < size; ++i)
    payload[i] = static_cast<std::uint8_t>((salt * 2654435761u + i * 131) & 0xff);
  return payload;
}

}  // namespace

TEST_CASE("udp transport delivers small messages in order with metadata intact") {
  Endpoint tx;
  Endpoint rx;
  const std::string topic = "/sensor/points";

  Inbox inbox;
  rx.bus.declare_topic(topic);
  QosPolicy qos;
  qos.depth = 1024;
  rx.bus.subscribe("collector", topic, "collect", qos, rx.executor.domain(),
                   [&inbox](const Envelope& env) {
                     std::lock_guard lock(inbox.mutex);
                     inbox.got.push_back(env);
                   });
  rx.hub.add_topic(topic);
  int port = rx.hub.listen_udp(0);
  REQUIRE(port > 0);

  tx.bus.declare_topic(topic);
  tx.hub.export_topic_udp(topic, port);
  auto pub = tx.bus.advertise("producer", topic);

  std::vector<std::vector<std::uint8_t>> sent;
  for (int i = 0; i < 200; ++i) {
    sent.push_back(pattern_payload(512, static_cast<std::uint64_t>(i)));
    pub->publish(sent.back());
    if (i % 20 == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }

  REQUIRE(wait_for([&] { return inbox.size() == 200; }));
  std::lock_guard lock(inbox.mutex);
  for (std::size_t i = 0; i < inbox.got.size(); ++i) {
    REQUIRE(inbox.got[i].seq == i + 1);
    REQUIRE(inbox.got[i].topic == topic);
    REQUIRE(*inbox.got[i].payload == sent[i]);
    REQUIRE(inbox.got[i].publish_ts > 0);
  }
  REQUIRE(tx.hub.counters().sent_messages.load() == 200);
  REQUIRE(rx.hub.counters().received_messages.load() == 200);
}

TEST_CASE("udp transport carries a multi-megabyte payload bit-identically") {
  Endpoint tx;
  Endpoint rx;
  const std::string topic = "/camera/raw";

  std::mutex mutex;
  std::vector<std::vector<std::uint8_t>> got;
  rx.bus.declare_topic(topic);
  QosPolicy qos;
  qos.depth = 8;
  rx.bus.subscribe("collector", topic, "collect", qos, rx.executor.domain(),
                   [&](const Envelope& env) {
                     std::lock_guard lock(mutex);
                     got.push_back(*env.payload);
                   });
  rx.hub.add_topic(topic);
  int port = rx.hub.listen_udp(0);

  tx.bus.declare_topic(topic);
  tx.hub.export_topic_udp(topic, port);
  auto pub = tx.bus.advertise("producer", topic);

  auto payload = pattern_payload(8 * 1024 * 1024, 99);
  // loss is legal for this mode; several attempts make the test robust
  bool delivered = false;
  for (int attempt = 0; attempt < 5 && !delivered; ++attempt) {
    pub->publish(payload);
    delivered = wait_for(
        [&] {
          std::lock_guard lock(mutex);
          return !got.empty();
        },
        2 * kSecond);
  }
  REQUIRE(delivered);
  std::lock_guard lock(mutex);
  REQUIRE(got.front() == payload);
}

TEST_CASE("udp transport suppresses stale completions so seqs never reorder") {
  Endpoint rx;
  const std::string topic = "/t";
  Inbox inbox;
  rx.bus.declare_topic(topic);
  QosPolicy qos;
  qos.depth = 64;
  rx.bus.subscribe("collector", topic, "c", qos, rx.executor.domain(),
                   [&inbox](const Envelope& env) {
                     std::lock_guard lock(inbox.mutex);
                     inbox.got.push_back(env);
                   });
  rx.hub.add_topic(topic);
  int port = rx.hub.listen_udp(0);

  // hand-built datagrams arriving out of order: seq 2 completes before seq 1
  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  REQUIRE(fd >= 0);
  auto dest = transport_detail::loopback(static_cast<std::uint16_t>(port));
  std::uint64_t hash = fnv1a64(topic);
  auto payload = pattern_payload(64, 7);
  for (std::uint64_t seq : {2, 1, 3}) {
    for (const auto& frag : encode_fragments(hash, seq, 1000 + seq, payload.data(), payload.size()))
      ::sendto(fd, frag.data(), frag.size(), 0, reinterpret_cast<sockaddr*>(&dest), sizeof dest);
  }
  ::close(fd);

  REQUIRE(wait_for([&] { return inbox.size() == 2; }));
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  auto seqs = inbox.seqs();
  REQUIRE(seqs == std::vector<std::uint64_t>{2, 3});
  REQUIRE(rx.hub.counters().stale_dropped.load() == 1);
}

TEST_CASE("tcp transport delivers a clean stream without retransmission") {
  Endpoint tx;
  Endpoint rx;
  const std::string topic = "/plan/trajectory";

  Inbox inbox;
  rx.bus.declare_topic(topic);
  QosPolicy qos;
  qos.depth = 1024;
  rx.bus.subscribe("collector", topic, "collect", qos, rx.executor.domain(),
                   [&inbox](const Envelope& env) {
                     std::lock_guard lock(inbox.mutex);
                     inbox.got.push_back(env);
                   });
  rx.hub.add_topic(topic);
  int port = rx.hub.listen_tcp(0);

  tx.bus.declare_topic(topic);
  DeliveryParams params;
  params.ack_timeout = 500 * kMillisecond;
  params.max_retries = 10;
  params.queue_depth = 4096;
  tx.hub.export_topic_tcp(topic, port, params);
  auto pub = tx.bus.advertise("producer", topic);

  for (int i = 0; i < 500; ++i) pub->publish(pattern_payload(1024, static_cast<std::uint64_t>(i)));

  REQUIRE(wait_for([&] { return inbox.size() == 500; }));
  auto seqs = inbox.seqs();
  REQUIRE(seqs.size() == 500);
  REQUIRE(std::is_sorted(seqs.begin(), seqs.end()));
  REQUIRE(std::adjacent_find(seqs.begin(), seqs.end()) == seqs.end());
  REQUIRE(seqs.front() == 1);
  REQUIRE(seqs.back() == 500);
  REQUIRE(tx.hub.counters().retransmits.load() == 0);
  REQUIRE(tx.hub.counters().delivery_failures.load() == 0);
  REQUIRE(tx.hub.counters().acks_received.load() >= 500);
}

TEST_CASE("tcp transport recovers every message from heavy whole-message drops") {
  Endpoint tx;
  Endpoint rx;
  const std::string topic = "/odometry";

  Inbox inbox;
  rx.bus.declare_topic(topic);
  QosPolicy qos;
  qos.depth = 4096;
  rx.bus.subscribe("collector", topic, "collect", qos, rx.executor.domain(),
                   [&inbox](const Envelope& env) {
                     std::lock_guard lock(inbox.mutex);
                     inbox.got.push_back(env);
                   });
  rx.hub.add_topic(topic);
  FaultPlan fault;
  fault.message_drop_rate = 0.30;
  fault.seed = 42;
  int port = rx.hub.listen_tcp(0, fault);

  tx.bus.declare_topic(topic);
  DeliveryParams params;
  params.ack_timeout = 2 * kMillisecond;
  params.max_retries = 100;
  params.queue_depth = 4096;
  tx.hub.export_topic_tcp(topic, port, params);
  auto pub = tx.bus.advertise("producer", topic);

  const int kCount = 2000;
  for (int i = 0; i < kCount; ++i) pub->publish(pattern_payload(256, static_cast<std::uint64_t>(i)));

  REQUIRE(wait_for([&] { return inbox.size() == kCount; }, 60 * kSecond));
  auto seqs = inbox.seqs();
  REQUIRE(seqs.size() == kCount);
  REQUIRE(std::is_sorted(seqs.begin(), seqs.end()));
  REQUIRE(std::adjacent_find(seqs.begin(), seqs.end()) == seqs.end());
  REQUIRE(seqs.front() == 1);
  REQUIRE(seqs.back() == kCount);
  REQUIRE(tx.hub.counters().retransmits.load() > 0);
  REQUIRE(tx.hub.counters().delivery_failures.load() == 0);
  REQUIRE(rx.hub.counters().faulted_messages.load() > 0);
}

TEST_CASE("tcp transport reassembles across fragment drops") {
  Endpoint tx;
  Endpoint rx;
  const std::string topic = "/map/patch";

  std::mutex mutex;
  std::map<std::uint64_t, std::vector<std::uint8_t>> got;
  rx.bus.declare_topic(topic);
  QosPolicy qos;
  qos.depth = 256;
  rx.bus.subscribe("collector", topic, "collect", qos, rx.executor.domain(),
                   [&](const Envelope& env) {
                     std::lock_guard lock(mutex);
                     got[env.seq] = *env.payload;
                   });
  rx.hub.add_topic(topic);
  FaultPlan fault;
  fault.fragment_drop_rate = 0.30;
  fault.seed = 7;
  int port = rx.hub.listen_tcp(0, fault);

  tx.bus.declare_topic(topic);
  DeliveryParams params;
  params.ack_timeout = 10 * kMillisecond;
  params.max_retries = 200;
  params.queue_depth = 64;
  tx.hub.export_topic_tcp(topic, port, params);
  auto pub = tx.bus.advertise("producer", topic);

  const int kCount = 40;
  std::vector<std::vector<std::uint8_t>> sent;
  for (int i = 0; i < kCount; ++i) {
    sent.push_back(pattern_payload(150 * 1024, static_cast<std::uint64_t>(i)));  // 3 fragments
    pub->publish(sent.back());
  }

  REQUIRE(wait_for(
      [&] {
        std::lock_guard lock(mutex);
        return got.size() == kCount;
      },
      120 * kSecond));
  std::lock_guard lock(mutex);
  for (int i = 0; i < kCount; ++i) {
    auto it = got.find(static_cast<std::uint64_t>(i) + 1);
    REQUIRE(it != got.end());
    REQUIRE(it->second == sent[static_cast<std::size_t>(i)]);
  }
  REQUIRE(tx.hub.counters().retransmits.load() > 0);
  REQUIRE(rx.hub.counters().faulted_fragments.load() > 0);
  REQUIRE(tx.hub.counters().delivery_failures.load() == 0);
}

TEST_CASE("tcp sender bounds its backlog with keep-last eviction") {
  Endpoint tx;
  Endpoint rx;
  const std::string topic = "/status";

  Inbox inbox;
  rx.bus.declare_topic(topic);
  QosPolicy qos;
  qos.depth = 1024;
  rx.bus.subscribe("collector", topic, "collect", qos, rx.executor.domain(),
                   [&inbox](const Envelope& env) {
                     std::lock_guard lock(inbox.mutex);
                     inbox.got.push_back(env);
                   });
  rx.hub.add_topic(topic);
  int port = rx.hub.listen_tcp(0);

  tx.bus.declare_topic(topic);
  DeliveryParams params;
  params.ack_timeout = 500 * kMillisecond;
  params.max_retries = 10;
  params.queue_depth = 1;
  tx.hub.export_topic_tcp(topic, port, params);
  auto pub = tx.bus.advertise("producer", topic);

  const int kCount = 100;
  for (int i = 0; i < kCount; ++i) pub->publish(pattern_payload(128, static_cast<std::uint64_t>(i)));

  REQUIRE(wait_for([&] {
    auto seqs = inbox.seqs();
    return !seqs.empty() && seqs.back() == kCount;
  }));
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  auto seqs = inbox.seqs();
  REQUIRE(std::is_sorted(seqs.begin(), seqs.end()));
  REQUIRE(std::adjacent_find(seqs.begin(), seqs.end()) == seqs.end());
  REQUIRE(seqs.back() == kCount);
  auto evicted = tx.hub.counters().sender_evictions.load();
  REQUIRE(tx.hub.counters().retransmits.load() == 0);
  REQUIRE(seqs.size() + evicted == kCount);
}

TEST_CASE("tcp receiver nacks reassemblies that exceed the expiry window") {
  Endpoint rx;
  const std::string topic = "/lidar/full";
  Inbox inbox;
  rx.bus.declare_topic(topic);
  QosPolicy qos;
  qos.depth = 16;
  rx.bus.subscribe("collector", topic, "c", qos, rx.executor.domain(),
                   [&inbox](const Envelope& env) {
                     std::lock_guard lock(inbox.mutex);
                     inbox.got.push_back(env);
                   });
  rx.hub.add_topic(topic);
  int port = rx.hub.listen_tcp(0);

  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(fd >= 0);
  auto dest = transport_detail::loopback(static_cast<std::uint16_t>(port));
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&dest), sizeof dest) == 0);

  std::uint64_t hash = fnv1a64(topic);
  auto big = pattern_payload(100 * 1024, 3);  // 2 fragments
  auto frags = encode_fragments(hash, 1, 111, big.data(), big.size());
  REQUIRE(frags.size() == 2);
  // first fragment only; its partner never arrives
  REQUIRE(transport_detail::write_all(fd, frags[0].data(), frags[0].size()));

  std::this_thread::sleep_for(
      std::chrono::nanoseconds(kReassemblyWindowNs + 50 * kMillisecond));

  // a fresh single-fragment message forces the receiver through its expiry scan
  auto small = pattern_payload(64, 4);
  for (const auto& f : encode_fragments(hash, 2, 222, small.data(), small.size()))
    REQUIRE(transport_detail::write_all(fd, f.data(), f.size()));

  // expect an ack for seq 2 and a nack for seq 1, in either order
  bool saw_ack2 = false;
  bool saw_nack1 = false;
  std::atomic<bool> no_stop{false};
  for (int i = 0; i < 2; ++i) {
    std::uint8_t buf[16];
    REQUIRE(transport_detail::read_exact(fd, buf, sizeof buf, no_stop));
    auto control = decode_control(buf, sizeof buf);
    REQUIRE(control.has_value());
    REQUIRE(control->topic_hash == hash);
    if (control->is_nack && control->seq == 1) saw_nack1 = true;
    if (!control->is_nack && control->seq == 2) saw_ack2 = true;
  }
  REQUIRE(saw_ack2);
  REQUIRE(saw_nack1);
  REQUIRE(rx.hub.counters().nacks_sent.load() == 1);
  REQUIRE(rx.hub.counters().expired_messages.load() == 1);

  REQUIRE(wait_for([&] { return inbox.size() == 1; }));
  {
    std::lock_guard lock(inbox.mutex);
    REQUIRE(inbox.got.front().seq == 2);
    REQUIRE(*inbox.got.front().payload == small);
  }
  ::close(fd);
}

TEST_CASE("transported delivery matches local delivery on an identical schedule") {
  const std::string topic = "/chain/object";
  const int kCount = 150;

  auto run_schedule = [&](auto&& wire_up) {
    Endpoint tx;
    Endpoint rx;
    Inbox inbox;
    rx.bus.declare_topic(topic);
    QosPolicy qos;
    qos.depth = 1024;
    rx.bus.subscribe("collector", topic, "collect", qos, rx.executor.domain(),
                     [&inbox](const Envelope& env) {
                       std::lock_guard lock(inbox.mutex);
                       inbox.got.push_back(env);
                     });
    tx.bus.declare_topic(topic);
    wire_up(tx, rx);
    auto pub = tx.bus.advertise("producer", topic);
    for (int i = 0; i < kCount; ++i) {
      pub->publish(pattern_payload(2048, static_cast<std::uint64_t>(i)));
      if (i % 10 == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    REQUIRE(wait_for([&] { return inbox.size() == kCount; }, 30 * kSecond));
    std::lock_guard lock(inbox.mutex);
    std::vector<std::pair<std::uint64_t, std::vector<std::uint8_t>>> out;
    for (const auto& e : inbox.got) out.emplace_back(e.seq, *e.payload);
    return out;
  };

  auto local = run_schedule([&](Endpoint& tx, Endpoint& rx) {
    tx.bus.add_remote_sink(topic, [&rx, topic](const Envelope& env) {
      Envelope copy = env;
      rx.bus.inject(std::move(copy));
    });
  });
  auto udp = run_schedule([&](Endpoint& tx, Endpoint& rx) {
    rx.hub.add_topic(topic);
    int port = rx.hub.listen_udp(0);
    tx.hub.export_topic_udp(topic, port);
  });
  auto tcp = run_schedule([&](Endpoint& tx, Endpoint& rx) {
    rx.hub.add_topic(topic);
    int port = rx.hub.listen_tcp(0);
    DeliveryParams params;
    params.ack_timeout = 100 * kMillisecond;
    params.max_retries = 20;
    params.queue_depth = 1024;
    tx.hub.export_topic_tcp(topic, port, params);
  });

  REQUIRE(local == udp);
  REQUIRE(local == tcp);
}

TEST_CASE("one connection multiplexes topics with independent flow control") {
  Endpoint tx;
  Endpoint rx;
  const std::string heavy = "/heavy";
  const std::string light = "/light";

  std::mutex mutex;
  std::vector<std::uint64_t> heavy_seqs;
  std::vector<std::uint64_t> light_seqs;
  QosPolicy qos;
  qos.depth = 1024;
  rx.bus.declare_topic(heavy);
  rx.bus.declare_topic(light);
  rx.bus.subscribe("collector", heavy, "h", qos, rx.executor.domain(), [&](const Envelope& env) {
    std::lock_guard lock(mutex);
    heavy_seqs.push_back(env.seq);
  });
  rx.bus.subscribe("collector", light, "l", qos, rx.executor.domain(), [&](const Envelope& env) {
    std::lock_guard lock(mutex);
    light_seqs.push_back(env.seq);
  });
  rx.hub.add_topic(heavy);
  rx.hub.add_topic(light);
  int port = rx.hub.listen_tcp(0);

  tx.bus.declare_topic(heavy);
  tx.bus.declare_topic(light);
  DeliveryParams params;
  params.ack_timeout = 200 * kMillisecond;
  params.max_retries = 20;
  params.queue_depth = 512;
  tx.hub.export_topic_tcp(heavy, port, params);
  tx.hub.export_topic_tcp(light, port, params);
  auto pub_heavy = tx.bus.advertise("producer", heavy);
  auto pub_light = tx.bus.advertise("producer", light);

  for (int i = 0; i < 60; ++i) {
    pub_heavy->publish(pattern_payload(120 * 1024, static_cast<std::uint64_t>(i)));
    pub_light->publish(pattern_payload(64, static_cast<std::uint64_t>(i)));
  }

  REQUIRE(wait_for(
      [&] {
        std::lock_guard lock(mutex);
        return heavy_seqs.size() == 60 && light_seqs.size() == 60;
      },
      60 * kSecond));
  std::lock_guard lock(mutex);
  REQUIRE(std::is_sorted(heavy_seqs.begin(), heavy_seqs.end()));
  REQUIRE(std::is_sorted(light_seqs.begin(), light_seqs.end()));
  REQUIRE(tx.hub.counters().delivery_failures.load() == 0);
}

TEST_CASE("reliable sender reports failure when the peer never appears") {
  Endpoint tx;
  const std::string topic = "/void";
  tx.bus.declare_topic(topic);

  // a port that was live just long enough to be plausible, then closed
  int probe = ::socket(AF_INET, SOCK_STREAM, 0);
  auto addr = transport_detail::loopback(0);
  REQUIRE(::bind(probe, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  int dead_port = transport_detail::bound_port(probe);
  ::close(probe);

  DeliveryParams params;
  params.ack_timeout = kMillisecond;
  params.max_retries = 1;
  params.queue_depth = 8;
  params.connect_timeout = 500 * kMillisecond;
  tx.hub.export_topic_tcp(topic, dead_port, params);
  auto pub = tx.bus.advertise("producer", topic);
  pub->publish(pattern_payload(64, 1));
  pub->publish(pattern_payload(64, 2));

  REQUIRE(wait_for([&] { return tx.hub.counters().delivery_failures.load() == 2; },
                   5 * kSecond));
}
