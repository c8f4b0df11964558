#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "anchor/demo/project_config.hpp"
#include "anchor/wire/bytes.hpp"

namespace anchor::demo {

struct ProjectTrace {
  std::string project_id;
  std::uint64_t commands = 0;
  std::uint64_t successes = 0;
  std::uint64_t failures = 0;
  double final_plant = 0.0;
  double target = 0.0;
  /// Commands needed to get within tolerance, failures included; nullopt when
  /// the closed form does not apply (noise, or gain outside (0, 1)).
  std::optional<std::uint64_t> convergence_bound;
};

struct AuditReport {
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  std::uint64_t commands = 0;
  std::uint64_t events = 0;  // Success + Failure
  std::uint64_t started = 0;
  std::uint64_t observations = 0;
  std::uint64_t aggregate_writes = 0;
  std::vector<ProjectTrace> projects;

  bool ok() const noexcept { return failures.empty(); }
  std::string summary_json() const;
};

constexpr double kConvergenceTolerance = 1e-9;

/// ceil(log(eps / |x0 - target|) / log(1 - g)) for the linear stub with
/// effective gain g in (0, 1); 0 when x0 is already within eps.
std::uint64_t convergence_bound(double x0, double target, double g, double eps);

/// Cross-checks a finished run's logs and region. expected_cycles 0 skips the
/// command count check.
AuditReport audit_run(const DemoConfig& cfg, std::uint64_t expected_cycles);

/// Command and event bodies of a run, timestamps removed, for comparing runs.
struct TraceBodies {
  std::vector<wire::Bytes> commands;
  std::vector<wire::Bytes> events;
};
TraceBodies trace_bodies(const DemoConfig& cfg);

struct ReplayReport {
  std::size_t reproduced = 0;
  std::size_t recorded = 0;
  std::optional<std::size_t> divergence;        // first differing event index
  std::optional<std::uint64_t> divergence_cycle;
  std::string detail;
  bool corrupt_tail = false;

  bool match() const noexcept { return !divergence && reproduced == recorded; }
};

/// Feeds the Command entries of an executor log through a fresh ExecutorCore
/// and compares the resulting event bodies with the Event entries of
/// verify_against (defaults to the same log). Throws Error(LogCorrupt).
ReplayReport replay_run(const std::string& log_path, const std::vector<ProjectConfig>& projects,
                        const std::string& verify_against = "");

}  // namespace anchor::demo
