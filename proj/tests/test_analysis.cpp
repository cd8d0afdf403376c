#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "chainbench/analysis.hpp"
#include "chainbench/clock.hpp"
#include "chainbench/trace_io.hpp"

#include "path_oracle.hpp"

using namespace chainbench;
using namespace path_oracle;

TEST_CASE("single hop splits into communication and compute per the anchor rule") {
  // stimulus at t=0, callback at 5 ms, output published at 7 ms
  ChainSpec chain = simple_chain({sub_hop("A", "/s", "/out")}, "/s");
  TraceLog log;
  log.run_id = "r";
  log.events = {
      ev(TraceKind::Publish, 0, 1, "sensor", "/s", 1),
      ev(TraceKind::SubCbStart, 5 * kMillisecond, 1, "A", "/s", 1),
      ev(TraceKind::Publish, 7 * kMillisecond, 1, "A", "/out", 1),
      ev(TraceKind::SubCbEnd, 8 * kMillisecond, 1, "A", "/s", 1),
  };

  auto paths = reconstruct_paths(log, chain);
  REQUIRE(paths.size() == 1);
  REQUIRE(paths[0].complete);
  REQUIRE(paths[0].sensor_seq == 1);

  auto b = decompose(paths[0]);
  REQUIRE(b.communication == 5 * kMillisecond);
  REQUIRE(b.compute == 2 * kMillisecond);
  REQUIRE(b.idle == 0);
  REQUIRE(b.e2e == 7 * kMillisecond);
  REQUIRE(b.per_hop.size() == 1);
}

TEST_CASE("timer hop accrues idle from the storing callback's end") {
  ChainSpec chain = simple_chain({sub_hop("A", "/x"), timer_hop("A", "/o")}, "/x");
  TraceLog log;
  log.run_id = "r";
  log.events = {
      ev(TraceKind::Publish, 0, 1, "src", "/x", 1),
      ev(TraceKind::SubCbStart, 2 * kMillisecond, 1, "A", "/x", 1),
      ev(TraceKind::SubCbEnd, 10 * kMillisecond, 1, "A", "/x", 1),
      ev(TraceKind::TimerCbStart, 18 * kMillisecond, 1, "A", "/x", 1),
      ev(TraceKind::Publish, 19 * kMillisecond, 1, "A", "/o", 1),
      ev(TraceKind::TimerCbEnd, 20 * kMillisecond, 1, "A"),
  };

  auto paths = reconstruct_paths(log, chain);
  REQUIRE(paths.size() == 1);
  REQUIRE(paths[0].complete);

  auto b = decompose(paths[0]);
  REQUIRE(b.idle == 8 * kMillisecond);
  REQUIRE(b.communication == 2 * kMillisecond);
  REQUIRE(b.compute == 8 * kMillisecond + 1 * kMillisecond);
  REQUIRE(b.e2e == 19 * kMillisecond);
  REQUIRE(b.idle + b.communication + b.compute == b.e2e);
}

TEST_CASE("one sensor message through a two-hop chain yields exactly one complete path") {
  ChainSpec chain = simple_chain({sub_hop("A", "/s", "/mid"), sub_hop("B", "/mid", "/out")}, "/s");
  TraceLog log;
  log.run_id = "r";
  log.events = {
      ev(TraceKind::Publish, 100, 1, "sensor", "/s", 1),
      ev(TraceKind::SubCbStart, 200, 1, "A", "/s", 1),
      ev(TraceKind::Publish, 250, 1, "A", "/mid", 1),
      ev(TraceKind::SubCbEnd, 300, 1, "A", "/s", 1),
      ev(TraceKind::SubCbStart, 400, 2, "B", "/mid", 1),
      ev(TraceKind::Publish, 450, 2, "B", "/out", 1),
      ev(TraceKind::SubCbEnd, 500, 2, "B", "/mid", 1),
  };
  auto paths = reconstruct_paths(log, chain);
  REQUIRE(paths.size() == 1);
  REQUIRE(paths[0].complete);
  REQUIRE(paths[0].hop_events.size() == 2);
  REQUIRE(paths[0].hop_events[0].publish_ts == 250);
  REQUIRE(paths[0].hop_events[1].publish_ts == 450);
}

TEST_CASE("evicted deliveries leave truncated incomplete paths") {
  // five of ten stimuli never dispatch at hop 0
  ChainSpec chain = simple_chain({sub_hop("A", "/s", "/out")}, "/s");
  TraceLog log;
  log.run_id = "r";
  Ns t = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    log.events.push_back(ev(TraceKind::Publish, t += 100, 1, "sensor", "/s", s));
    if (s % 2 == 0) {
      log.events.push_back(ev(TraceKind::SubCbStart, t += 100, 1, "A", "/s", s));
      log.events.push_back(ev(TraceKind::Publish, t += 10, 1, "A", "/out", s));
      log.events.push_back(ev(TraceKind::SubCbEnd, t += 10, 1, "A", "/s", s));
    }
  }
  auto paths = reconstruct_paths(log, chain);
  REQUIRE(paths.size() == 10);
  REQUIRE(count_complete(paths) == 5);
  for (const auto& p : paths) {
    if (p.sensor_seq % 2 == 0) {
      REQUIRE(p.complete);
    } else {
      REQUIRE_FALSE(p.complete);
      REQUIRE(p.hop_events.empty());
    }
  }
  REQUIRE(data_age_series(paths).size() == 5);
}

TEST_CASE("two timer firings on one stored input fork into two paths of one sample") {
  ChainSpec chain = simple_chain({sub_hop("A", "/s"), timer_hop("A", "/cmd")}, "/s");
  TraceLog log;
  log.run_id = "r";
  log.events = {
      ev(TraceKind::Publish, 0, 1, "sensor", "/s", 7),
      ev(TraceKind::SubCbStart, 1 * kMillisecond, 1, "A", "/s", 7),
      ev(TraceKind::SubCbEnd, 2 * kMillisecond, 1, "A", "/s", 7),
      // first firing: output at 100 ms
      ev(TraceKind::TimerCbStart, 90 * kMillisecond, 1, "A", "/s", 7),
      ev(TraceKind::Publish, 100 * kMillisecond, 1, "A", "/cmd", 1),
      ev(TraceKind::TimerCbEnd, 101 * kMillisecond, 1, "A"),
      // second firing, same stored input: output at 120 ms
      ev(TraceKind::TimerCbStart, 115 * kMillisecond, 1, "A", "/s", 7),
      ev(TraceKind::Publish, 120 * kMillisecond, 1, "A", "/cmd", 2),
      ev(TraceKind::TimerCbEnd, 121 * kMillisecond, 1, "A"),
  };

  auto paths = reconstruct_paths(log, chain);
  REQUIRE(paths.size() == 2);
  REQUIRE(count_complete(paths) == 2);
  REQUIRE(paths[0].sensor_seq == 7);
  REQUIRE(paths[1].sensor_seq == 7);

  auto ages = data_age_series(paths);
  REQUIRE(ages.size() == 1);
  REQUIRE(ages[0] == Catch::Approx(110.0).epsilon(1e-12));
}

TEST_CASE("reconstruction errors when the sensor topic never appears") {
  ChainSpec chain = simple_chain({sub_hop("A", "/s", "/out")}, "/s");
  TraceLog log;
  log.run_id = "r";
  log.events = {ev(TraceKind::Publish, 0, 1, "x", "/other", 1)};
  REQUIRE_THROWS_AS(reconstruct_paths(log, chain), std::runtime_error);
}

TEST_CASE("decompose rejects incomplete paths") {
  PathInstance p;
  p.complete = false;
  REQUIRE_THROWS_AS(decompose(p), std::invalid_argument);
}

TEST_CASE("kpi series average per sensor input before statistics") {
  // seq 1: two complete paths; seq 2: one; seq 3: incomplete only
  ChainSpec chain = simple_chain({sub_hop("A", "/s"), timer_hop("A", "/o")}, "/s");
  TraceLog log;
  log.run_id = "r";
  auto add_path = [&](std::uint64_t sensor_seq, Ns base, std::uint64_t out_seq) {
    log.events.push_back(ev(TraceKind::TimerCbStart, base, 1, "A", "/s", sensor_seq));
    log.events.push_back(ev(TraceKind::Publish, base + kMillisecond, 1, "A", "/o", out_seq));
    log.events.push_back(ev(TraceKind::TimerCbEnd, base + 2 * kMillisecond, 1, "A"));
  };
  log.events.push_back(ev(TraceKind::Publish, 0, 1, "sensor", "/s", 1));
  log.events.push_back(ev(TraceKind::SubCbStart, 10, 1, "A", "/s", 1));
  log.events.push_back(ev(TraceKind::SubCbEnd, 20, 1, "A", "/s", 1));
  add_path(1, 10 * kMillisecond, 1);
  add_path(1, 30 * kMillisecond, 2);
  log.events.push_back(ev(TraceKind::Publish, 50 * kMillisecond, 1, "sensor", "/s", 2));
  log.events.push_back(ev(TraceKind::SubCbStart, 50 * kMillisecond + 10, 1, "A", "/s", 2));
  log.events.push_back(ev(TraceKind::SubCbEnd, 50 * kMillisecond + 20, 1, "A", "/s", 2));
  add_path(2, 80 * kMillisecond, 3);
  log.events.push_back(ev(TraceKind::Publish, 90 * kMillisecond, 1, "sensor", "/s", 3));

  std::sort(log.events.begin(), log.events.end(),
            [](const TraceEvent& a, const TraceEvent& b) { return a.t < b.t; });
  auto paths = reconstruct_paths(log, chain);
  REQUIRE(paths.size() == 4);  // 2 + 1 + 1 empty
  REQUIRE(count_complete(paths) == 3);

  auto e2e = kpi_series_ms(paths, Kpi::E2E);
  REQUIRE(e2e.size() == 2);  // seq 3 contributes nothing
  // seq 1 paths end at 11 ms and 31 ms -> mean 21 ms; seq 2 ends at 81-50=31 ms
  REQUIRE(e2e[0] == Catch::Approx(21.0).epsilon(1e-12));
  REQUIRE(e2e[1] == Catch::Approx(31.0).epsilon(1e-12));

  // per-seq component means still satisfy the identity
  auto idle = kpi_series_ms(paths, Kpi::Idle);
  auto comm = kpi_series_ms(paths, Kpi::Communication);
  auto comp = kpi_series_ms(paths, Kpi::Computation);
  for (std::size_t i = 0; i < e2e.size(); ++i)
    REQUIRE(idle[i] + comm[i] + comp[i] == Catch::Approx(e2e[i]).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// randomized schedule oracle
// ---------------------------------------------------------------------------

TEST_CASE("reconstruction recovers the exact ground-truth path set on random schedules") {
  std::mt19937_64 rng(0x5eed);
  std::size_t total_complete = 0, total_incomplete = 0, total_forked = 0;
  for (int iter = 0; iter < 1200; ++iter) {
    auto schedule = random_schedule(rng);
    schedule_times(schedule, rng);
    auto trace = emit_trace(schedule, rng);
    auto want = expected_paths(schedule);

    INFO("iteration " << iter << " hops " << schedule.chain.hops.size() << " seqs "
                      << schedule.seqs.size());
    auto got = reconstruct_paths(trace, schedule.chain);
    REQUIRE(canonical_set(got) == canonical_set(want));

    // every complete path decomposes exactly, with non-negative parts
    for (const auto& p : got) {
      if (!p.complete) continue;
      auto b = decompose(p);
      REQUIRE(b.idle + b.communication + b.compute == b.e2e);
      REQUIRE(b.per_hop.size() == p.hop_events.size());
      Ns idle = 0, comm = 0, comp = 0;
      for (const auto& h : b.per_hop) {
        REQUIRE(h.communication >= 0);
        REQUIRE(h.idle >= 0);
        REQUIRE(h.compute >= 0);
        idle += h.idle;
        comm += h.communication;
        comp += h.compute;
      }
      REQUIRE(idle == b.idle);
      REQUIRE(comm == b.communication);
      REQUIRE(comp == b.compute);
    }

    // sample count never exceeds stimulus count
    REQUIRE(data_age_series(got).size() <= schedule.seqs.size());

    std::size_t n_complete = count_complete(got);
    total_complete += n_complete;
    total_incomplete += got.size() - n_complete;
    std::map<std::uint64_t, std::size_t> per_seq;
    for (const auto& p : got) ++per_seq[p.sensor_seq];
    for (const auto& [seq, n] : per_seq) total_forked += n > 1 ? 1 : 0;
  }
  // the generator must exercise completion, truncation, and fork handling heavily
  REQUIRE(total_complete > 1000);
  REQUIRE(total_incomplete > 1000);
  REQUIRE(total_forked > 200);
}
