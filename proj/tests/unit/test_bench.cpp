#include <algorithm>
#include <random>

#include "doctest.h"
#include "support.hpp"

#include "anchor/bench/latency.hpp"
#include "anchor/bench/recovery.hpp"
#include "anchor/bench/stats.hpp"
#include "anchor/error.hpp"

using namespace anchor;
using namespace anchor::bench;

namespace {

// Smallest sample x with at least p% of the samples <= x.
std::uint64_t percentile_by_count(const std::vector<std::uint64_t>& s, double p) {
  std::vector<std::uint64_t> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  for (auto x : sorted) {
    const auto at_most = static_cast<double>(std::count_if(s.begin(), s.end(), [&](auto v) { return v <= x; }));
    if (at_most * 100.0 >= p * static_cast<double>(s.size())) return x;
  }
  return sorted.back();
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("percentile examples") {
  const std::vector<std::uint64_t> tens{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  CHECK(percentiles(tens, {50, 90, 99}) == std::vector<std::uint64_t>{50, 90, 100});
  CHECK(percentiles({7}) == std::vector<std::uint64_t>{7, 7, 7});
  CHECK(percentiles({4, 1, 3, 2}, {50, 100}) == std::vector<std::uint64_t>{2, 4});
  CHECK_THROWS_AS(percentiles({}), Error);
  CHECK_THROWS_AS(percentiles({1}, {0}), Error);
  CHECK_THROWS_AS(percentiles({1}, {101}), Error);
}

TEST_CASE("ecdf examples") {
  const auto c = ecdf({2, 1, 1});
  REQUIRE(c.size() == 2);
  CHECK(c[0].first == 1);
  CHECK(c[0].second == doctest::Approx(2.0 / 3));
  CHECK(c[1] == std::pair<std::uint64_t, double>{2, 1.0});
  CHECK(ecdf_at(c, 0) == 0.0);
  CHECK(ecdf_at(c, 1) == doctest::Approx(2.0 / 3));
  CHECK(ecdf_at(c, 50) == 1.0);
  CHECK_THROWS_AS(ecdf({}), Error);
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
}

TEST_CASE("percentiles and ecdf agree with counting on random data") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    std::vector<std::uint64_t> s(n);
    for (auto& x : s) x = rng() % 40;
    const std::vector<double> ps{1, 25, 50, 90, 99, 100};
    const auto got = percentiles(s, ps);
    const auto curve = ecdf(s);
    CHECK(curve.back().second == 1.0);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      REQUIRE(got[i] == percentile_by_count(s, ps[i]));
      REQUIRE(ecdf_at(curve, got[i]) >= ps[i] / 100.0 - 1e-12);
    }
  }
}

TEST_CASE("default warmup") {
  CHECK(default_warmup(30) == doctest::Approx(3));
  CHECK(default_warmup(10) == doctest::Approx(2));
  CHECK(default_warmup(2) == doctest::Approx(1));
  CHECK(default_grid().size() == 4);
  CHECK(default_grid()[1].rate == 5000);
}

TEST_CASE("analyze_trace on a synthetic outage") {
  std::vector<std::uint64_t> offsets;
  for (int i = 0; i < 1000; ++i) {
    const double t = i * 0.01;
    if (t >= 3.0 && t < 5.2) continue;
    offsets.push_back(static_cast<std::uint64_t>(t * 1e9));
  }
  const auto t = analyze_trace(offsets, 0.5, 10, 3.0, 5.0);
  CHECK(t.bins.size() == 20);
  CHECK(t.steady_mean == doctest::Approx(50));
  CHECK(t.downtime_silent);
  CHECK(t.zero_runs == 1);
  REQUIRE(t.recovered_ts.has_value());
  CHECK(*t.recovered_ts == doctest::Approx(5.5));

  const auto never = analyze_trace({static_cast<std::uint64_t>(0.1e9)}, 0.5, 10, 3.0, 5.0);
  CHECK(never.zero_runs == 1);

  std::vector<std::uint64_t> leaky = offsets;
  leaky.push_back(static_cast<std::uint64_t>(4.1e9));
  const auto l = analyze_trace(leaky, 0.5, 10, 3.0, 5.0);
  CHECK_FALSE(l.downtime_silent);
  CHECK(l.zero_runs == 2);
}

TEST_CASE("short latency run through real processes") {
  testing::TempDir dir;
  LatencyOptions o;
  o.payload = 128;
  o.rate = 500;
  o.duration_s = 3;
  o.exe = ANCHORCTL_PATH;
  o.work_dir = dir.path().string();
  o.label = "smoke";
  o.allow_invalid = true;
  const auto r = run_latency(o);
  MESSAGE("achieved " << r.achieved_rate << " msg/s");
  CHECK(r.achieved_rate > 0.5 * o.rate);
  CHECK(r.samples.size() > 500);
  const auto p = percentiles(r.samples);
  MESSAGE("P50 " << p[0] << " P90 " << p[1] << " P99 " << p[2]);
  CHECK(p[2] < 10'000'000);
  CHECK(std::filesystem::exists(dir.file("smoke.csv")));
  CHECK(std::filesystem::exists(dir.file("smoke.json")));

  o.rate = 1e9;
  o.duration_s = 1;
  o.warmup_s = 0.2;
  o.label = "";
  o.allow_invalid = false;
  CHECK_THROWS_AS(run_latency(o), Error);
}

TEST_CASE("short recovery run restores throughput and subscriptions") {
  testing::TempDir dir;
  RecoveryOptions o;
  o.rate = 400;
  o.kill_after_s = 3;
  o.downtime_s = 1;
  o.total_s = 7;
  o.exe = ANCHORCTL_PATH;
  o.work_dir = dir.path().string();
  const auto t = run_recovery(o);
  CHECK(t.downtime_silent);
  REQUIRE(t.recovered_ts.has_value());
  CHECK(*t.recovered_ts - t.restart_ts <= 5.0 + 2.0);
  CHECK(t.restored_channels == std::vector<std::string>{"bench"});
  CHECK(t.routing_consistent);
}

}  // TEST_SUITE
