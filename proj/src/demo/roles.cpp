#include "anchor/demo/roles.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include <spdlog/spdlog.h>

#include "anchor/client/client.hpp"
#include "anchor/clock.hpp"
#include "anchor/error.hpp"
#include "anchor/records/replay_log.hpp"

namespace anchor::demo {

namespace {

std::vector<double> f64_values(const records::GroupSnapshot& g) { return std::get<std::vector<double>>(g.values); }

client::ClientOptions role_options(const DemoConfig& cfg, const std::string& role) {
  auto opts = cfg.bus;
  if (opts.node_id.empty()) opts.node_id = role;
  return opts;
}

wire::TopicAddress local_topic(const std::string& channel, std::uint8_t prio) {
  wire::TopicAddress t;
  t.channel = channel;
  t.region = wire::Region{wire::Region::Kind::Local, ""};
  t.prio = prio;
  return t;
}

wire::Subscription local_subscription(const std::string& channel) {
  wire::Subscription s;
  s.channel_pattern = channel;
  s.region.kind = wire::RegionFilter::Kind::Local;
  return s;
}

void wait_for_stop(const std::atomic<bool>& stop) {
  while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
}

bool wait_registered(client::Client& c, const DemoConfig& cfg) {
  if (c.wait_registered(std::chrono::seconds(cfg.timeout_s))) return true;
  spdlog::error("{}: not registered with the broker after {} s", c.node_id(), cfg.timeout_s);
  return false;
}

}  // namespace

// ---- source format ----

std::string format_observation(const RawObservation& o) {
  std::string out = o.project_id + "|" + std::to_string(o.index) + "|";
  char buf[64];
  for (std::size_t i = 0; i < o.values.size(); ++i) {
    if (i) out += ',';
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, o.values[i]);
    out.append(buf, p);
  }
  return out;
}

std::optional<RawObservation> parse_observation(std::string_view line) {
  const auto a = line.find('|');
  if (a == std::string_view::npos) return std::nullopt;
  const auto b = line.find('|', a + 1);
  if (b == std::string_view::npos) return std::nullopt;
  RawObservation o;
  o.project_id = std::string(line.substr(0, a));
  if (o.project_id.empty()) return std::nullopt;
  const auto idx = line.substr(a + 1, b - a - 1);
  auto [ip, iec] = std::from_chars(idx.data(), idx.data() + idx.size(), o.index);
  if (iec != std::errc{} || ip != idx.data() + idx.size()) return std::nullopt;
  std::string_view rest = line.substr(b + 1);
  while (true) {
    const auto comma = rest.find(',');
    const auto item = rest.substr(0, comma);
    double v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || p != item.data() + item.size()) return std::nullopt;
    o.values.push_back(v);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return o;
}

wire::Bytes encode_observation(const RawObservation& o) {
  wire::Bytes out;
  wire::ByteWriter w(out);
  w.token(o.project_id);
  w.u64(o.index);
  w.u32(static_cast<std::uint32_t>(o.values.size()));
  for (double v : o.values) w.u64(std::bit_cast<std::uint64_t>(v));
  return out;
}

RawObservation decode_observation(wire::ByteView body) {
  wire::ByteReader r(body);
  RawObservation o;
  std::uint32_t n = 0;
  if (!r.token(o.project_id) || !r.u64(o.index) || !r.u32(n) || r.remaining() != n * 8ull) {
    throw Error(Errc::LengthMismatch, "observation body");
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    r.u64(bits);
    o.values.push_back(std::bit_cast<double>(bits));
  }
  return o;
}

// ---- preprocessing ----

Preprocessor::Preprocessor(std::size_t window, std::size_t dims, WindowMode mode, double lo, double hi)
    : window_(window, dims, mode), lo_(lo), hi_(hi) {
  if (!(hi > lo)) throw Error(Errc::ConfigError, "normalization bounds");
}

std::optional<Preprocessor::Result> Preprocessor::ingest(std::string_view line) {
  auto parsed = parse_observation(line);
  if (!parsed || parsed->values.size() != window_.dims()) {
    ++malformed_;
    return std::nullopt;
  }
  for (double v : parsed->values) {
    if (!std::isfinite(v)) {
      ++non_finite_;
      return std::nullopt;
    }
  }
  Result r;
  r.normalized = std::move(*parsed);
  for (double& v : r.normalized.values) v = (v - lo_) / (hi_ - lo_);
  r.aggregates = window_.push(r.normalized.values);
  return r;
}

// ---- inference ----

CommandMsg infer(double mean, std::uint64_t count, const ProjectConfig& project, std::uint64_t cycle) {
  CommandMsg c;
  c.project_id = project.project_id;
  c.cycle = cycle;
  if (count == 0) {
    c.action = Action::Hold;
    c.stale = true;
    return c;
  }
  if (mean > project.theta) {
    c.action = Action::Decrease;
    c.magnitude = project.gain * (mean - project.theta);
  } else if (mean < project.theta) {
    c.action = Action::Increase;
    c.magnitude = project.gain * (project.theta - mean);
  } else {
    c.action = Action::Hold;
  }
  return c;
}

CommandMsg infer(const records::Snapshot& snap, const ProjectConfig& project, std::uint64_t cycle) {
  const auto& agg = snap.f64(agg_group(project.project_id));
  if (agg.size() < kAggFeatures + 4) throw Error(Errc::ArityMismatch, "aggregate group too small");
  const double mean = agg[kAggFeatures + 0];
  const auto count = static_cast<std::uint64_t>(agg[kAggFeatures + 3]);
  return infer(mean, count, project, cycle);
}

// ---- executor ----

ExecutorCore::ExecutorCore(const std::vector<ProjectConfig>& projects) {
  for (const auto& p : projects) plants_.emplace(p.project_id, Plant{p.initial, 0, &p});
}

std::pair<EventMsg, EventMsg> ExecutorCore::execute(std::uint64_t command_seq, const CommandMsg& c) {
  auto it = plants_.find(c.project_id);
  if (it == plants_.end()) throw Error(Errc::ConfigError, "command for unknown project '" + c.project_id + "'");
  Plant& p = it->second;
  ++p.ordinal;
  EventMsg started{c.project_id, command_seq, EventStatus::Started, p.value};
  if (p.config->fail_on.count(p.ordinal)) {
    return {started, EventMsg{c.project_id, command_seq, EventStatus::Failure, p.value}};
  }
  switch (c.action) {
    case Action::Increase: p.value += c.magnitude; break;
    case Action::Decrease: p.value -= c.magnitude; break;
    case Action::Hold: break;
  }
  return {started, EventMsg{c.project_id, command_seq, EventStatus::Success, p.value}};
}

double ExecutorCore::plant(const std::string& project) const {
  auto it = plants_.find(project);
  if (it == plants_.end()) throw Error(Errc::ConfigError, "unknown project '" + project + "'");
  return it->second.value;
}

// ---- producer ----

int run_producer(const DemoConfig& cfg, const std::atomic<bool>& stop) {
  auto region = records::RegionHandle::open(cfg.region_path(), records::AccessRole::Ingestion);
  auto log = records::ReplayLogWriter::open(cfg.log_path("producer"));
  region.attach_log(&log);

  struct State {
    Preprocessor pre;
    std::uint64_t seen_counter = 0;
    double ref = 0;
    double bursts = 0;
    std::uint64_t index = 0;
    std::uint64_t emitted = 0;
    std::vector<double> walk;
  };
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> step(0.0, 1.0);
  std::vector<State> states;
  for (std::size_t i = 0; i < cfg.projects.size(); ++i) {
    states.push_back(State{Preprocessor(cfg.window, cfg.features, cfg.window_mode, cfg.norm_lo, cfg.norm_hi), 0, 0, 0, 0, 0, {}});
    states.back().walk.assign(cfg.features, 0.5 * (cfg.norm_lo + cfg.norm_hi));
    states.back().walk[0] = 0.0;
  }

  spdlog::info("producer: {} projects, window {}", cfg.projects.size(), cfg.window);
  while (!stop.load()) {
    bool any = false;
    for (std::size_t i = 0; i < cfg.projects.size(); ++i) {
      const auto& project = cfg.projects[i];
      State& st = states[i];
      const auto snap = region.read_snapshot({ack_group(project.project_id)});
      const auto& g = snap.groups.front();
      if (g.version_counter == 0 || g.version_counter == st.seen_counter) continue;
      st.seen_counter = g.version_counter;
      any = true;
      const auto ack = f64_values(g);

      for (std::size_t k = 0; k < cfg.window; ++k) {
        if (cfg.nan_every && ++st.emitted % cfg.nan_every == 0) {
          RawObservation bad{project.project_id, st.index++, std::vector<double>(cfg.features, 0.0)};
          bad.values[0] = std::numeric_limits<double>::quiet_NaN();
          st.pre.ingest(format_observation(bad));
        }
        RawObservation raw{project.project_id, st.index++, {}};
        if (cfg.noise > 0) st.walk[0] += cfg.noise * step(rng);
        raw.values.push_back(ack[kAckPlant] + st.walk[0]);
        for (std::size_t d = 1; d < cfg.features; ++d) {
          st.walk[d] += 0.01 * (cfg.norm_hi - cfg.norm_lo) * step(rng);
          raw.values.push_back(st.walk[d]);
        }
        auto result = st.pre.ingest(format_observation(raw));
        if (!result) continue;
        log.append(records::LogKind::Observation, encode_observation(result->normalized), monotonic_ns());
        if (!result->aggregates) continue;
        if (k + 1 == cfg.window) {
          st.ref = ack[kAckRef];
          st.bursts += 1;
        }
        std::vector<double> values{st.ref, st.bursts};
        for (const auto& a : *result->aggregates) {
          values.insert(values.end(), {a.mean, a.min, a.max, static_cast<double>(a.count)});
        }
        region.write_group(agg_group(project.project_id), values);
      }
    }
    if (!any) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    spdlog::info("producer: {} rejected {} malformed, {} non-finite", cfg.projects[i].project_id,
                 states[i].pre.malformed(), states[i].pre.non_finite());
  }
  log.flush();
  return 0;
}

// ---- inference ----

int run_inference(const DemoConfig& cfg, std::uint64_t cycles, const std::atomic<bool>& stop) {
  auto region = records::RegionHandle::open(cfg.region_path(), records::AccessRole::Reader);
  auto log = records::ReplayLogWriter::open(cfg.log_path("inference"));
  client::Client bus(role_options(cfg, "inference"));
  if (!wait_registered(bus, cfg)) return 3;

  std::vector<std::string> groups;
  for (const auto& p : cfg.projects) groups.push_back(agg_group(p.project_id));
  std::vector<double> last_seq(cfg.projects.size(), 0.0);
  std::vector<double> consumed(cfg.projects.size(), 0.0);

  const std::uint64_t period = cfg.cycle_ms * kNsPerMs;
  const std::uint64_t deadline = monotonic_ns() + cfg.timeout_s * kNsPerSec;
  std::uint64_t next_tick = monotonic_ns();
  std::uint64_t cycle = 0;
  bool complete = false;

  while (!stop.load()) {
    sleep_until_ns(next_tick);
    next_tick += period;
    const std::uint64_t now = monotonic_ns();
    if (now > deadline) {
      spdlog::error("inference: timed out at cycle {} of {}", cycle, cycles);
      break;
    }
    const auto snap = region.read_snapshot(groups);
    bool ready = true;
    for (std::size_t i = 0; i < cfg.projects.size() && ready; ++i) {
      const auto& agg = snap.groups[i];
      const auto& v = std::get<std::vector<double>>(agg.values);
      ready = v[kAggRef] == last_seq[i] && v[kAggBurst] > consumed[i];
    }
    if (!ready) continue;
    if (cycle == cycles) {
      complete = true;
      break;
    }
    for (std::size_t i = 0; i < cfg.projects.size(); ++i) {
      const auto& project = cfg.projects[i];
      CommandMsg cmd = infer(snap, project, cycle);
      if (cmd.stale) spdlog::warn("inference: {}: stale snapshot at cycle {}", project.project_id, cycle);
      cmd.issued_at_ns = now;
      const auto payload = encode(cmd);
      std::uint64_t seq = 0;
      bus.publish(local_topic(project.command_channel, project.command_prio), payload, &seq);
      log.append(records::LogKind::Command, encode_logged(seq, payload), now);
      last_seq[i] = static_cast<double>(seq);
      consumed[i] = std::get<std::vector<double>>(snap.groups[i].values)[kAggBurst];
    }
    ++cycle;
  }
  bus.wait_drained(std::chrono::seconds(2));
  log.flush();
  bus.stop();
  spdlog::info("inference: issued {} cycles{}", cycle, complete ? "" : " (incomplete)");
  return complete ? 0 : 3;
}

// ---- executor ----

int run_executor(const DemoConfig& cfg, const std::atomic<bool>& stop) {
  auto log = records::ReplayLogWriter::open(cfg.log_path("executor"));
  ExecutorCore core(cfg.projects);
  client::Client bus(role_options(cfg, "executor"));

  for (const auto& project : cfg.projects) {
    const ProjectConfig* p = &project;
    bus.subscribe(local_subscription(project.command_channel), [&, p](const wire::MessageEnvelope& e) {
      const std::uint64_t now = monotonic_ns();
      log.append(records::LogKind::Command, encode_logged(e.seq, e.payload), now);
      CommandMsg cmd;
      try {
        cmd = decode_command(e.payload);
      } catch (const Error& err) {
        spdlog::warn("executor: undecodable command seq {}: {}", e.seq, err.what());
        return;
      }
      const auto [started, result] = core.execute(e.seq, cmd);
      for (const auto& ev : {started, result}) {
        const auto payload = encode(ev);
        std::uint64_t seq = 0;
        bus.publish(local_topic(p->status_channel, p->status_prio), payload, &seq);
        log.append(records::LogKind::Event, encode_logged(seq, payload), monotonic_ns());
      }
    });
  }
  wait_for_stop(stop);
  bus.wait_drained(std::chrono::seconds(2));
  bus.stop();
  log.flush();
  return 0;
}

// ---- materializer ----

int run_materializer(const DemoConfig& cfg, const std::atomic<bool>& stop) {
  auto region = records::RegionHandle::open(cfg.region_path(), records::AccessRole::Feedback);
  auto log = records::ReplayLogWriter::open(cfg.log_path("materializer"));
  region.attach_log(&log);
  std::map<std::string, double> applied;
  for (const auto& p : cfg.projects) {
    region.write_group(feedback_group(p.project_id), std::vector<double>{p.initial});
    region.write_group(ack_group(p.project_id), std::vector<double>{0.0, 0.0, p.initial, 0.0});
    applied[p.project_id] = 0;
  }

  client::Client bus(role_options(cfg, "materializer"));
  for (const auto& project : cfg.projects) {
    bus.subscribe(local_subscription(project.status_channel), [&](const wire::MessageEnvelope& e) {
      log.append(records::LogKind::Event, encode_logged(e.seq, e.payload), monotonic_ns());
      EventMsg ev;
      try {
        ev = decode_event(e.payload);
      } catch (const Error& err) {
        spdlog::warn("materializer: undecodable event seq {}: {}", e.seq, err.what());
        return;
      }
      if (ev.status == EventStatus::Started) return;
      auto it = applied.find(ev.project_id);
      if (it == applied.end()) return;
      it->second += 1;
      if (ev.status == EventStatus::Success) {
        region.write_group(feedback_group(ev.project_id), std::vector<double>{ev.measured});
      }
      region.write_group(ack_group(ev.project_id),
                         std::vector<double>{static_cast<double>(ev.ref_command),
                                             static_cast<double>(static_cast<int>(ev.status)), ev.measured, it->second});
    });
  }
  wait_for_stop(stop);
  bus.stop();
  log.flush();
  return 0;
}

}  // namespace anchor::demo
