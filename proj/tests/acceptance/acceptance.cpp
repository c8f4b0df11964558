// Acceptance run: one PASS/FAIL line per criterion. Arguments select a subset
// of criteria by number; with none, all eight run.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "anchor/bench/latency.hpp"
#include "anchor/bench/recovery.hpp"
#include "anchor/bench/stats.hpp"
#include "anchor/client/client.hpp"
#include "anchor/demo/audit.hpp"
#include "anchor/error.hpp"
#include "anchor/process.hpp"
#include "anchor/records/region.hpp"
#include "broker_model.hpp"
#include "gateway_scenario.hpp"
#include "generators.hpp"
#include "support.hpp"

using namespace anchor;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("FAILED " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// Smallest sample x such that at least p% of samples are <= x, found by counting.
std::uint64_t percentile_by_count(std::vector<std::uint64_t> s, double p) {
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto at_most = static_cast<double>(std::upper_bound(s.begin(), s.end(), s[i]) - s.begin());
    if (at_most * 100.0 >= p * n) return s[i];
  }
  return s.back();
}

int run_anchorctl(std::vector<std::string> args, const std::string& log) {
  args.insert(args.begin(), ANCHORCTL_PATH);
  auto child = ChildProcess::spawn(args, log);
  const auto code = child.wait_for(std::chrono::seconds(300));
  return code ? *code : -1;
}

// ---- 1 ----
Verdict codec() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  testing::Gen g(2024);
  std::size_t bad_frames = 0, bad_topics = 0;
  std::vector<wire::Frame> frames;
  wire::Bytes stream;
  for (int i = 0; i < 10000; ++i) {
    frames.push_back(g.frame());
    const auto bytes = wire::encode_frame(frames.back());
    const auto r = wire::decode_frame(bytes);
    if (!r.frame || *r.frame != frames.back() || r.consumed != bytes.size()) ++bad_frames;
    stream.insert(stream.end(), bytes.begin(), bytes.end());

    const auto t = g.topic();
    const auto text = wire::format_topic(t);
    if (wire::parse_topic(text) != t || wire::format_topic(wire::parse_topic(text)) != text) ++bad_topics;
  }
  v.require(bad_frames == 0, std::to_string(bad_frames) + " frames did not round trip");
  v.require(bad_topics == 0, std::to_string(bad_topics) + " topics did not round trip");

  std::size_t chunk_runs_ok = 0;
  for (int run = 0; run < 3; ++run) {
    wire::FrameDecoder dec;
    std::vector<wire::Frame> got;
    std::size_t at = 0;
    while (at < stream.size()) {
      const std::size_t n = std::min(stream.size() - at, 1 + g.below(run == 0 ? 3 : 4096));
      dec.feed(wire::ByteView(stream.data() + at, n));
      at += n;
      while (auto f = dec.next()) got.push_back(std::move(*f));
    }
    if (got == frames && dec.buffered() == 0) ++chunk_runs_ok;
  }
  v.require(chunk_runs_ok == 3, "chunked decode differs from whole-frame decode");
  const double secs = seconds_since(t0);
  v.require(secs < 10.0, "runtime " + fmt(secs) + " s over 10 s");
  v.note("10000 frames, 10000 topics, " + std::to_string(stream.size()) + " stream bytes in " + fmt(secs) + " s");
  return v;
}

// ---- 2 ----
Verdict routing() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t ops = 0, deliveries = 0, failures = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto r = testing::run_routing_property(seed, 2000);
    ops += r.operations;
    deliveries += r.deliveries;
    failures += r.failures.size();
    for (const auto& f : r.failures) v.note(f);
  }
  v.require(failures == 0, std::to_string(failures) + " disagreements with the reference model");
  v.require(deliveries > 0, "no deliveries exercised");
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + fmt(secs) + " s over 60 s");
  v.note(std::to_string(ops) + " operations, " + std::to_string(deliveries) + " deliveries in " + fmt(secs) + " s");
  return v;
}

// ---- 3 ----
Verdict residence() {
  Verdict v;
  broker::BrokerConfig cfg;
  cfg.max_residence_ns = 1'000'000;
  broker::ServerOptions so;
  so.listen = {"127.0.0.1", 0};
  broker::BrokerServer server(cfg, so);
  const auto tick = server.core().config().tick_ns;
  std::mutex mu;
  std::vector<std::uint64_t> residence;
  server.core().set_dispatch_observer([&](const broker::DispatchRecord& r) {
    if (r.channel != "res") return;
    std::lock_guard lk(mu);
    residence.push_back(r.send_ns - r.enqueue_ns);
  });
  std::thread loop([&] { server.run(); });
  const net::Endpoint ep{"127.0.0.1", server.port()};
  {
    client::Client sub(testing::scenario_client("sub", ep));
    client::Client pub(testing::scenario_client("pub", ep));
    wire::Subscription s;
    s.channel_pattern = "res";
    std::atomic<std::size_t> got{0};
    sub.subscribe(s, [&](const wire::MessageEnvelope&) { ++got; });
    const bool ready = bench::wait_for_subscriptions(ep, "sub", 1, 5000ms) && pub.wait_registered(5000ms);
    v.require(ready, "clients did not come up");
    const auto topic = wire::parse_topic("/res/local/3");
    for (int i = 0; ready && i < 1000; ++i) {
      pub.publish(topic, wire::Bytes(64));
      std::this_thread::sleep_for(5ms);
    }
    testing::eventually([&] { return got.load() >= 1000; }, 5000ms);
    v.require(got.load() == 1000, "subscriber received " + std::to_string(got.load()) + " of 1000");
  }
  server.stop();
  loop.join();
  const std::uint64_t bound = cfg.max_residence_ns + 2 * tick;
  std::lock_guard lk(mu);
  v.require(!residence.empty(), "no dispatches observed");
  if (!residence.empty()) {
    const auto worst = *std::max_element(residence.begin(), residence.end());
    const auto over = std::count_if(residence.begin(), residence.end(), [&](auto r) { return r > bound; });
    v.require(over == 0, std::to_string(over) + " of " + std::to_string(residence.size()) + " messages over " +
                             std::to_string(bound) + " ns");
    v.note(std::to_string(residence.size()) + " messages, max residence " + std::to_string(worst) + " ns, bound " +
           std::to_string(bound) + " ns");
  }
  return v;
}

// ---- 4 ----
Verdict latency_grid(const fs::path& out) {
  Verdict v;
  bench::LatencyOptions base;
  base.duration_s = 30;
  base.exe = ANCHORCTL_PATH;
  base.work_dir = (out / "latency").string();
  const auto grid = bench::default_grid();
  std::vector<bench::GridCell> cells;
  try {
    cells = bench::run_grid(base, grid, 5);
  } catch (const std::exception& e) {
    v.require(false, std::string("grid run: ") + e.what());
    return v;
  }

  // (a) recompute every run's percentiles from its CSV by counting.
  std::size_t checked = 0, mismatched = 0;
  for (const auto& entry : fs::directory_iterator(base.work_dir)) {
    if (entry.path().extension() != ".csv") continue;
    std::ifstream in(entry.path());
    std::string line;
    std::getline(in, line);
    std::vector<std::uint64_t> lat;
    while (std::getline(in, line)) {
      const auto c = line.rfind(',');
      lat.push_back(std::stoull(line.substr(c + 1)));
    }
    std::ifstream js(fs::path(entry.path()).replace_extension(".json"));
    const auto summary = nlohmann::json::parse(js);
    const auto mine = bench::percentiles(lat);
    const auto curve = bench::ecdf(lat);
    const double ps[] = {50, 90, 99};
    const char* keys[] = {"P50", "P90", "P99"};
    for (int k = 0; k < 3; ++k) {
      const auto oracle = percentile_by_count(lat, ps[k]);
      if (mine[k] != oracle || summary[keys[k]].get<std::uint64_t>() != oracle ||
          bench::ecdf_at(curve, oracle) < ps[k] / 100.0) {
        ++mismatched;
      }
    }
    ++checked;
  }
  v.require(checked == grid.size() * 5, "found " + std::to_string(checked) + " run outputs");
  v.require(mismatched == 0, "(a) " + std::to_string(mismatched) + " percentiles differ from the counting oracle");
  v.note("(a) " + std::to_string(checked) + " runs checked against the counting oracle");

  // (b) medians weakly increase along the grid order; (c) P99 <= 10 ms.
  const char* names[] = {"P50", "P90", "P99"};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& m = cells[i].median_percentiles;
    v.note(std::to_string(cells[i].config.payload) + " B @ " + fmt(cells[i].config.rate, 0) + "/s median P50 " +
           fmt(m[0] / 1e3, 1) + " us, P90 " + fmt(m[1] / 1e3, 1) + " us, P99 " + fmt(m[2] / 1e3, 1) + " us");
    for (const auto& rep : cells[i].percentiles) {
      v.require(rep[2] <= 10'000'000, "(c) P99 " + std::to_string(rep[2]) + " ns at " +
                                          std::to_string(cells[i].config.payload) + " B/" +
                                          fmt(cells[i].config.rate, 0));
    }
    if (i == 0) continue;
    for (int k = 0; k < 3; ++k) {
      const double prev = cells[i - 1].median_percentiles[static_cast<std::size_t>(k)];
      const double cur = m[static_cast<std::size_t>(k)];
      v.require(cur >= prev, std::string("(b) median ") + names[k] + " drops from " + fmt(prev / 1e3, 1) + " us to " +
                                 fmt(cur / 1e3, 1) + " us between grid positions " + std::to_string(i) + " and " +
                                 std::to_string(i + 1));
    }
  }
  return v;
}

// ---- 5 ----
Verdict recovery(const fs::path& out) {
  Verdict v;
  for (int rep = 1; rep <= 5; ++rep) {
    bench::RecoveryOptions o;
    o.exe = ANCHORCTL_PATH;
    o.work_dir = (out / ("recovery_r" + std::to_string(rep))).string();
    o.label = "recovery";
    client::BackoffPolicy policy;
    bench::ThroughputTrace t;
    try {
      t = bench::run_recovery(o);
      bench::write_recovery_outputs(t, o, o.work_dir, o.label);
    } catch (const std::exception& e) {
      v.require(false, "rep " + std::to_string(rep) + ": " + e.what());
      continue;
    }
    const std::string r = "rep " + std::to_string(rep) + ": ";
    const double limit = static_cast<double>(policy.cap_ns) / 1e9 + 2.0;
    v.require(t.downtime_silent, r + "deliveries during downtime");
    v.require(t.zero_runs == 1, r + std::to_string(t.zero_runs) + " zero-throughput intervals");
    v.require(t.recovered_ts.has_value(), r + "throughput never recovered");
    if (t.recovered_ts) {
      v.require(*t.recovered_ts - t.restart_ts <= limit,
                r + "recovered " + fmt(*t.recovered_ts - t.restart_ts, 2) + " s after restart, limit " + fmt(limit, 1));
    }
    v.require(t.restored_channels == std::vector<std::string>{"bench"}, r + "subscriptions not re-registered");
    v.require(t.routing_consistent, r + "routing indices inconsistent after restart");
    v.note(r + "steady " + fmt(t.steady_mean, 0) + "/bin, restart " + fmt(t.restart_ts, 2) + " s, recovered " +
           (t.recovered_ts ? fmt(*t.recovered_ts, 2) + " s" : std::string("never")));
  }
  return v;
}

// ---- 6 ----
std::vector<std::uint64_t> independent_offsets(const std::vector<records::FieldGroup>& groups) {
  std::vector<std::uint64_t> out;
  std::uint64_t at = 4096;
  for (const auto& g : groups) {
    out.push_back(at);
    const std::uint64_t stride = g.type == records::ElementType::Bytes ? ((4 + g.max_bytes + 7) / 8) * 8 : 8;
    at += ((g.arity * stride + 7) / 8) * 8;
  }
  return out;
}

Verdict record_store(const fs::path& out) {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const auto path = (out / "stress.anc").string();
  constexpr std::uint32_t kArity = 32;
  records::RecordSchema schema;
  schema.groups.push_back({"stress", records::ElementType::F64, kArity, records::WriterRole::Ingestion, 0});
  schema.groups.push_back({"tag", records::ElementType::Bytes, 2, records::WriterRole::Feedback, 13});
  records::RegionHandle::create(path, schema);

  std::atomic<bool> done{false};
  std::atomic<std::uint64_t> snapshots{0}, inconsistent{0}, timeouts{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 8; ++r) {
    readers.emplace_back([&] {
      auto h = records::RegionHandle::open(path);
      while (!done.load(std::memory_order_relaxed)) {
        try {
          const auto snap = h.read_snapshot({"stress"});
          const auto& x = snap.f64("stress");
          double sum = 0;
          for (std::uint32_t i = 0; i + 1 < kArity; ++i) sum += x[i];
          bool uniform = true;
          for (std::uint32_t i = 1; i + 1 < kArity; ++i) uniform = uniform && x[i] == x[0] + i;
          if (sum != x[kArity - 1] || !uniform) ++inconsistent;
          ++snapshots;
        } catch (const Error&) {
          ++timeouts;
        }
      }
    });
  }
  {
    auto w = records::RegionHandle::open(path, records::AccessRole::Ingestion);
    std::vector<double> x(kArity);
    for (std::uint64_t k = 1; k <= 100000; ++k) {
      double sum = 0;
      for (std::uint32_t i = 0; i + 1 < kArity; ++i) sum += (x[i] = static_cast<double>(k + i));
      x[kArity - 1] = sum;
      w.write_group("stress", x);
    }
    v.require(w.version_counter() == 200000, "version counter " + std::to_string(w.version_counter()));
  }
  done = true;
  for (auto& t : readers) t.join();
  v.require(inconsistent.load() == 0, std::to_string(inconsistent.load()) + " inconsistent snapshots");
  v.require(snapshots.load() > 0, "no snapshots taken");
  v.note("100000 writes, " + std::to_string(snapshots.load()) + " snapshots, " + std::to_string(timeouts.load()) +
         " contended retries exhausted, 0 accepted torn reads required");

  // Offset stability across schema extension.
  auto maint = records::RegionHandle::open(path, records::AccessRole::Maintenance);
  const auto before = maint.layout();
  std::vector<records::FieldGroup> added{{"extra", records::ElementType::I64, 3, records::WriterRole::Feedback, 0},
                                         {"label", records::ElementType::Bytes, 1, records::WriterRole::Ingestion, 21}};
  maint.extend_schema(added);
  auto fresh = records::RegionHandle::open(path);
  auto all = schema.groups;
  all.insert(all.end(), added.begin(), added.end());
  const auto expect = independent_offsets(all);
  bool stable = fresh.layout().size() == all.size();
  for (std::size_t i = 0; stable && i < all.size(); ++i) stable = fresh.layout()[i].offset == expect[i];
  for (std::size_t i = 0; stable && i < before.size(); ++i) stable = before[i].offset == fresh.layout()[i].offset;
  v.require(stable, "offsets after extend_schema differ from the independent calculator");
  const auto last = fresh.read_snapshot({"stress"}).f64("stress");
  v.require(last[0] == 100000.0, "data moved by extend_schema");
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + fmt(secs) + " s over 60 s");
  v.note("offsets verified for " + std::to_string(all.size()) + " groups; " + fmt(secs) + " s");
  return v;
}

// ---- 7 ----
std::string demo_conf_for(const fs::path& run_dir, const fs::path& out, const std::string& stem) {
  std::ifstream in(std::string(ANCHOR_SOURCE_DIR) + "/configs/demo.conf");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = std::regex_replace(ss.str(), std::regex("run_dir = .*"), "run_dir = " + run_dir.string());
  const auto path = (out / (stem + ".conf")).string();
  std::ofstream o(path);
  o << text;
  return path;
}

Verdict closed_loop(const fs::path& out) {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const auto conf_a = demo_conf_for(out / "demo_a", out, "demo_a");
  const auto conf_b = demo_conf_for(out / "demo_b", out, "demo_b");
  const int code_a = run_anchorctl({"demo", "run", "--config", conf_a, "--cycles", "100"}, (out / "demo_a.out").string());
  const int code_b = run_anchorctl({"demo", "run", "--config", conf_b, "--cycles", "100"}, (out / "demo_b.out").string());
  v.require(code_a == 0, "first demo run exited " + std::to_string(code_a));
  v.require(code_b == 0, "second demo run exited " + std::to_string(code_b));
  if (code_a != 0 || code_b != 0) return v;

  const auto cfg_a = demo::DemoConfig::from(Config::load(conf_a));
  const auto cfg_b = demo::DemoConfig::from(Config::load(conf_b));
  const auto ta = demo::trace_bodies(cfg_a), tb = demo::trace_bodies(cfg_b);
  v.require(ta.commands == tb.commands, "command sequences differ between runs");
  v.require(ta.events == tb.events, "event sequences differ between runs");
  v.note(std::to_string(ta.commands.size()) + " commands, " + std::to_string(ta.events.size()) +
         " events identical across runs");

  const int replay = run_anchorctl({"log", "replay", "--path", cfg_a.log_path("executor"), "--config", conf_a},
                                   (out / "demo_replay.out").string());
  v.require(replay == 0, "log replay exited " + std::to_string(replay));

  const auto audit = demo::audit_run(cfg_a, 100);
  for (const auto& f : audit.failures) v.require(false, "audit: " + f);
  v.require(audit.commands == 100 * cfg_a.projects.size(), "command count " + std::to_string(audit.commands));
  v.require(audit.aggregate_writes > 0, "no aggregate writes recomputed");
  for (const auto& p : audit.projects) {
    v.require(p.convergence_bound.has_value(), p.project_id + ": no convergence bound");
    if (!p.convergence_bound) continue;
    v.require(*p.convergence_bound <= p.commands, p.project_id + ": bound " + std::to_string(*p.convergence_bound) +
                                                      " exceeds " + std::to_string(p.commands) + " commands");
    v.require(std::abs(p.final_plant - p.target) <= demo::kConvergenceTolerance,
              p.project_id + ": plant " + std::to_string(p.final_plant) + " not within 1e-9 of " +
                  std::to_string(p.target));
    v.note(p.project_id + ": bound " + std::to_string(*p.convergence_bound) + " commands, final |x-theta| " +
           std::to_string(std::abs(p.final_plant - p.target)));
  }
  v.note(std::to_string(audit.aggregate_writes) + " aggregate writes matched brute-force recomputation");
  const double secs = seconds_since(t0);
  v.require(secs < 30.0, "runtime " + fmt(secs) + " s over 30 s");
  v.note(fmt(secs, 1) + " s");
  return v;
}

// ---- 8 ----
Verdict gateway_scoping() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kN = 200;
  const auto two = testing::run_gateway_scenario({"A", "B"}, {{"A", "B"}, {"B", "A"}}, kN);
  v.require(two.ready, "two-cluster setup did not come up");
  if (two.ready) {
    const auto& a = two.received.at("A");
    const auto& b = two.received.at("B");
    v.require(b.total("local") == 0, std::to_string(b.total("local")) + " local messages crossed");
    v.require(a.total("local") == kN, "local delivery inside A: " + std::to_string(a.total("local")));
    v.require(b.total("global") == kN && b.distinct("global") == kN,
              "global in B: " + std::to_string(b.total("global")) + " deliveries of " +
                  std::to_string(b.distinct("global")) + " messages");
    v.require(b.total("B") == kN, "named-region B deliveries: " + std::to_string(b.total("B")));
    v.require(b.total("A") == 0, "named-region A leaked into B");
    v.require(a.max_copies() == 1 && b.max_copies() == 1, "a message was delivered twice");
    v.note("two clusters: " + std::to_string(two.stats.forwarded) + " forwarded, " +
           std::to_string(two.stats.local_scope) + " kept local");
  }
  const auto ring = testing::run_gateway_scenario({"A", "B", "C"}, {{"A", "B"}, {"B", "C"}, {"C", "A"}}, kN);
  v.require(ring.ready, "ring setup did not come up");
  if (ring.ready) {
    for (const char* c : {"A", "B", "C"}) {
      const auto& got = ring.received.at(c);
      v.require(got.total("global") == kN, std::string("ring ") + c + " global deliveries " +
                                               std::to_string(got.total("global")));
      v.require(got.max_copies() == 1, std::string("ring ") + c + " saw a duplicate");
    }
    v.note("ring: " + std::to_string(ring.stats.duplicates) + " copies suppressed");
  }
  const double secs = seconds_since(t0);
  v.require(secs < 30.0, "runtime " + fmt(secs) + " s over 30 s");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto want = [&](int n) { return selected.empty() || selected.count(n) > 0; };

  testing::TempDir scratch("anchor-acceptance");
  const fs::path out = scratch.path();
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"codec round trip and streaming decode", codec},
      {"routing, priority and ordering properties", routing},
      {"batch residence bound", residence},
      {"latency grid", [&] { return latency_grid(out); }},
      {"broker crash recovery", [&] { return recovery(out); }},
      {"record store consistency", [&] { return record_store(out); }},
      {"closed-loop determinism and audit", [&] { return closed_loop(out); }},
      {"gateway scoping", gateway_scoping},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!want(n)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    for (const auto& note : v.notes) std::cout << "    " << note << "\n";
    std::cout << "criterion " << n << " " << (v.pass ? "PASS" : "FAIL") << ": " << criteria[i].first << std::endl;
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
