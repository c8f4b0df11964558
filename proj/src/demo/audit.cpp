#include "anchor/demo/audit.hpp"

#include <cmath>
#include <deque>
#include <filesystem>
#include <map>
#include <set>

#include "json.hpp"

#include "anchor/demo/messages.hpp"
#include "anchor/demo/roles.hpp"
#include "anchor/error.hpp"
#include "anchor/records/region.hpp"
#include "anchor/records/replay_log.hpp"

namespace anchor::demo {

namespace {

records::ReplayResult load_log(const std::string& path, AuditReport& report) {
  if (!std::filesystem::exists(path)) {
    report.failures.push_back("missing log " + path);
    return {};
  }
  auto r = records::replay_log(path);
  if (r.corrupt_tail) report.notes.push_back(path + ": " + r.warning);
  return r;
}

struct BruteAggregate {
  double mean, min, max, count;
};

// Straight recomputation over a window buffer, independent of WindowState.
std::vector<BruteAggregate> brute_force(const std::deque<std::vector<double>>& buf, std::size_t dims) {
  std::vector<BruteAggregate> out;
  for (std::size_t d = 0; d < dims; ++d) {
    double sum = 0, mn = buf.front()[d], mx = buf.front()[d];
    for (const auto& v : buf) {
      sum += v[d];
      if (v[d] < mn) mn = v[d];
      if (v[d] > mx) mx = v[d];
    }
    out.push_back({sum / static_cast<double>(buf.size()), mn, mx, static_cast<double>(buf.size())});
  }
  return out;
}

bool close(double a, double b) { return std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(b)); }

void check_aggregates(const DemoConfig& cfg, const records::ReplayResult& log, AuditReport& report) {
  std::map<std::string, std::deque<std::vector<double>>> buffers;
  std::set<std::string> agg_names;
  for (const auto& p : cfg.projects) agg_names.insert(agg_group(p.project_id));
  std::string last_project;
  std::size_t mismatches = 0;

  for (const auto& e : log.entries) {
    if (e.kind == records::LogKind::Observation) {
      auto o = decode_observation(e.body);
      ++report.observations;
      auto& buf = buffers[o.project_id];
      buf.push_back(o.values);
      last_project = o.project_id;
    } else if (e.kind == records::LogKind::RecordWrite) {
      const auto w = records::decode_record_write(e.body);
      if (!agg_names.count(w.group)) continue;
      ++report.aggregate_writes;
      const std::string project = w.group.substr(0, w.group.size() - 4);
      auto& buf = buffers[project];
      if (project != last_project || buf.size() != cfg.window) {
        ++mismatches;
        continue;
      }
      const auto expect = brute_force(buf, cfg.features);
      const auto& got = std::get<std::vector<double>>(w.values);
      for (std::size_t d = 0; d < cfg.features; ++d) {
        const std::size_t at = kAggFeatures + 4 * d;
        if (!close(got[at], expect[d].mean) || got[at + 1] != expect[d].min || got[at + 2] != expect[d].max ||
            got[at + 3] != expect[d].count) {
          ++mismatches;
          break;
        }
      }
      if (cfg.window_mode == WindowMode::Sliding) buf.pop_front();
      else buf.clear();
    }
  }
  if (mismatches) report.failures.push_back(std::to_string(mismatches) + " aggregate writes differ from recomputation");
}

void check_write_roles(const records::RecordSchema& schema, const records::ReplayResult& log, records::WriterRole role,
                       const std::string& who, AuditReport& report) {
  std::map<std::string, records::WriterRole> owner;
  for (const auto& g : schema.groups) owner[g.name] = g.writer;
  for (const auto& e : log.entries) {
    if (e.kind != records::LogKind::RecordWrite) continue;
    const auto w = records::decode_record_write(e.body);
    auto it = owner.find(w.group);
    if (it == owner.end() || it->second != role) {
      report.failures.push_back(who + " wrote group '" + w.group + "' outside its role");
      return;
    }
  }
}

}  // namespace

std::uint64_t convergence_bound(double x0, double target, double g, double eps) {
  const double e0 = std::fabs(x0 - target);
  if (e0 <= eps) return 0;
  return static_cast<std::uint64_t>(std::ceil(std::log(eps / e0) / std::log(1.0 - g)));
}

std::string AuditReport::summary_json() const {
  nlohmann::json j = {{"ok", ok()},
                      {"commands", commands},
                      {"events", events},
                      {"started", started},
                      {"observations", observations},
                      {"aggregate_writes", aggregate_writes},
                      {"failures", failures},
                      {"notes", notes}};
  nlohmann::json ps = nlohmann::json::array();
  for (const auto& p : projects) {
    nlohmann::json pj = {{"project", p.project_id}, {"commands", p.commands},      {"successes", p.successes},
                         {"failures", p.failures},  {"final_plant", p.final_plant}, {"target", p.target}};
    pj["convergence_bound"] = p.convergence_bound ? nlohmann::json(*p.convergence_bound) : nlohmann::json();
    ps.push_back(pj);
  }
  j["projects"] = ps;
  return j.dump();
}

AuditReport audit_run(const DemoConfig& cfg, std::uint64_t expected_cycles) {
  AuditReport report;
  const auto inference = load_log(cfg.log_path("inference"), report);
  const auto executor = load_log(cfg.log_path("executor"), report);
  const auto materializer = load_log(cfg.log_path("materializer"), report);
  const auto producer = load_log(cfg.log_path("producer"), report);
  if (!report.ok()) return report;

  // Commands issued versus commands executed.
  std::vector<LoggedCommand> issued, executed;
  std::map<std::uint64_t, LoggedCommand> issued_by_seq;
  for (const auto& e : inference.entries) {
    if (e.kind == records::LogKind::RecordWrite) report.failures.push_back("inference wrote to the region");
    if (e.kind != records::LogKind::Command) continue;
    issued.push_back(decode_logged_command(e.body));
    issued_by_seq[issued.back().seq] = issued.back();
  }
  report.commands = issued.size();
  if (expected_cycles && issued.size() != expected_cycles * cfg.projects.size()) {
    report.failures.push_back("expected " + std::to_string(expected_cycles * cfg.projects.size()) + " commands, found " +
                              std::to_string(issued.size()));
  }

  std::vector<LoggedEvent> results;
  std::set<std::uint64_t> referenced;
  std::set<std::uint64_t> seen_commands;
  for (const auto& e : executor.entries) {
    if (e.kind == records::LogKind::RecordWrite) report.failures.push_back("executor wrote to the region");
    if (e.kind == records::LogKind::Command) {
      executed.push_back(decode_logged_command(e.body));
      seen_commands.insert(executed.back().seq);
    } else if (e.kind == records::LogKind::Event) {
      auto ev = decode_logged_event(e.body);
      if (ev.event.status == EventStatus::Started) {
        ++report.started;
        continue;
      }
      if (!seen_commands.count(ev.event.ref_command)) {
        report.failures.push_back("event seq " + std::to_string(ev.seq) + " references command " +
                                  std::to_string(ev.event.ref_command) + " not received before it");
      }
      if (!issued_by_seq.count(ev.event.ref_command)) {
        report.failures.push_back("orphan event seq " + std::to_string(ev.seq));
      }
      if (!referenced.insert(ev.event.ref_command).second) {
        report.failures.push_back("command " + std::to_string(ev.event.ref_command) + " has two outcome events");
      }
      results.push_back(ev);
    }
  }
  report.events = results.size();
  if (executed.size() != issued.size()) {
    report.failures.push_back(std::to_string(issued.size()) + " commands issued but " +
                              std::to_string(executed.size()) + " executed");
  } else {
    for (std::size_t i = 0; i < issued.size(); ++i) {
      if (issued[i].seq != executed[i].seq || canonical(issued[i].command) != canonical(executed[i].command)) {
        report.failures.push_back("executed command #" + std::to_string(i + 1) + " differs from the issued one");
        break;
      }
    }
  }
  if (results.size() != executed.size()) {
    report.failures.push_back(std::to_string(executed.size()) + " commands but " + std::to_string(results.size()) +
                              " outcome events");
  }

  // Materializer applied exactly the executor's outcome events.
  std::vector<EventMsg> applied;
  for (const auto& e : materializer.entries) {
    if (e.kind != records::LogKind::Event) continue;
    auto ev = decode_logged_event(e.body);
    if (ev.event.status != EventStatus::Started) applied.push_back(ev.event);
  }
  if (applied.size() != results.size()) {
    report.failures.push_back("materializer applied " + std::to_string(applied.size()) + " of " +
                              std::to_string(results.size()) + " outcome events");
  }

  const auto schema = cfg.schema();
  check_write_roles(schema, producer, records::WriterRole::Ingestion, "producer", report);
  check_write_roles(schema, materializer, records::WriterRole::Feedback, "materializer", report);
  check_aggregates(cfg, producer, report);

  // Per project: failure schedule, causality and convergence.
  auto region = records::RegionHandle::open(cfg.region_path(), records::AccessRole::Reader);
  const auto snap = region.read_snapshot();
  const double span = cfg.norm_hi - cfg.norm_lo;
  for (const auto& p : cfg.projects) {
    ProjectTrace t;
    t.project_id = p.project_id;
    t.target = cfg.norm_lo + p.theta * span;
    std::vector<double> trajectory{p.initial};
    std::optional<double> last_success;
    std::uint64_t ordinal = 0;
    for (const auto& r : results) {
      if (r.event.project_id != p.project_id) continue;
      ++ordinal;
      const bool should_fail = p.fail_on.count(ordinal) > 0;
      if (should_fail != (r.event.status == EventStatus::Failure)) {
        report.failures.push_back(p.project_id + ": command #" + std::to_string(ordinal) +
                                  " outcome does not follow the failure schedule");
      }
      if (r.event.status == EventStatus::Success) {
        ++t.successes;
        last_success = r.event.measured;
      } else {
        ++t.failures;
      }
      trajectory.push_back(r.event.measured);
    }
    t.commands = ordinal;
    t.final_plant = trajectory.back();

    const double feedback = snap.f64(feedback_group(p.project_id)).front();
    const double expect = last_success.value_or(p.initial);
    if (feedback != expect) {
      report.failures.push_back(p.project_id + ": feedback " + std::to_string(feedback) +
                                " differs from the latest Success measurement " + std::to_string(expect));
    }

    const double g = p.gain / span;
    if (cfg.noise == 0.0 && g > 0.0 && g < 1.0) {
      const std::uint64_t n = convergence_bound(p.initial, t.target, g, kConvergenceTolerance);
      // Failed commands leave the plant unchanged, so they extend the bound.
      std::uint64_t needed = 0, successes = 0;
      while (successes < n) {
        ++needed;
        if (!p.fail_on.count(needed)) ++successes;
      }
      t.convergence_bound = needed;
      for (std::size_t i = 1; i < trajectory.size(); ++i) {
        if (std::fabs(trajectory[i] - t.target) > std::fabs(trajectory[i - 1] - t.target) + 1e-15) {
          report.failures.push_back(p.project_id + ": plant moved away from the target at command #" +
                                    std::to_string(i));
          break;
        }
      }
      if (ordinal >= needed) {
        for (std::size_t i = needed; i < trajectory.size(); ++i) {
          if (std::fabs(trajectory[i] - t.target) > kConvergenceTolerance) {
            report.failures.push_back(p.project_id + ": not within tolerance after " + std::to_string(i) +
                                      " commands (bound " + std::to_string(needed) + ")");
            break;
          }
        }
      } else {
        report.notes.push_back(p.project_id + ": run shorter than the convergence bound " + std::to_string(needed));
      }
    } else {
      report.notes.push_back(p.project_id + ": convergence check skipped (noise or gain outside (0, 1))");
    }
    report.projects.push_back(t);
  }
  return report;
}

TraceBodies trace_bodies(const DemoConfig& cfg) {
  TraceBodies t;
  for (const auto& e : records::replay_log(cfg.log_path("inference")).entries) {
    if (e.kind != records::LogKind::Command) continue;
    const auto c = decode_logged_command(e.body);
    t.commands.push_back(encode_logged(c.seq, canonical(c.command)));
  }
  for (const auto& e : records::replay_log(cfg.log_path("executor")).entries) {
    if (e.kind == records::LogKind::Event) t.events.push_back(e.body);
  }
  return t;
}

ReplayReport replay_run(const std::string& log_path, const std::vector<ProjectConfig>& projects,
                        const std::string& verify_against) {
  ReplayReport report;
  const auto source = records::replay_log(log_path);
  report.corrupt_tail = source.corrupt_tail;

  ExecutorCore core(projects);
  std::vector<wire::Bytes> reproduced;
  std::vector<std::uint64_t> cycle_of;  // per reproduced event
  for (const auto& e : source.entries) {
    if (e.kind != records::LogKind::Command) continue;
    const auto c = decode_logged_command(e.body);
    const auto [started, result] = core.execute(c.seq, c.command);
    reproduced.push_back(encode(started));
    reproduced.push_back(encode(result));
    cycle_of.push_back(c.command.cycle);
    cycle_of.push_back(c.command.cycle);
  }

  std::vector<wire::Bytes> recorded;
  const auto reference = verify_against.empty() ? source : records::replay_log(verify_against);
  report.corrupt_tail = report.corrupt_tail || reference.corrupt_tail;
  for (const auto& e : reference.entries) {
    if (e.kind != records::LogKind::Event) continue;
    wire::ByteView body(e.body);
    if (body.size() < 8) throw Error(Errc::LogCorrupt, "short event entry");
    recorded.emplace_back(body.begin() + 8, body.end());
  }

  report.reproduced = reproduced.size();
  report.recorded = recorded.size();
  const std::size_t n = std::min(reproduced.size(), recorded.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (reproduced[i] != recorded[i]) {
      report.divergence = i;
      report.divergence_cycle = cycle_of[i];
      const auto a = decode_event(reproduced[i]);
      const auto b = decode_event(recorded[i]);
      report.detail = "event " + std::to_string(i) + " (cycle " + std::to_string(cycle_of[i]) + "): replayed " +
                      std::string(to_string(a.status)) + " measured " + std::to_string(a.measured) + ", recorded " +
                      std::string(to_string(b.status)) + " measured " + std::to_string(b.measured);
      return report;
    }
  }
  if (reproduced.size() != recorded.size()) {
    report.divergence = n;
    if (n < cycle_of.size()) report.divergence_cycle = cycle_of[n];
    report.detail = "replayed " + std::to_string(reproduced.size()) + " events, recorded " +
                    std::to_string(recorded.size());
  }
  return report;
}

}  // namespace anchor::demo
