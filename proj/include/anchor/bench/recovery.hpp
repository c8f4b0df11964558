#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace anchor::bench {

struct RecoveryOptions {
  double rate = 1000.0;
  std::size_t payload = 128;
  double kill_after_s = 10.0;
  double downtime_s = 5.0;
  double total_s = 30.0;
  double bin_width_s = 0.5;
  std::string exe;
  std::string work_dir = "bench-out";
  std::string label;  // file stem for outputs; empty skips them
  std::string broker_config;
};

struct ThroughputTrace {
  double bin_width_s = 0.5;
  std::vector<std::uint64_t> bins;  // delivered messages per bin
  double kill_ts = 0;
  double restart_ts = 0;
  std::optional<double> recovered_ts;
  double steady_mean = 0;
  /// Number of maximal runs of empty bins; a clean trace has exactly one.
  std::size_t zero_runs = 0;
  /// Every bin lying wholly inside [kill_ts, restart_ts] is empty.
  bool downtime_silent = false;
  /// Subscriber's channels as the restarted broker reports them.
  std::vector<std::string> restored_channels;
  bool routing_consistent = false;
};

/// Bins receive offsets (ns since the start of the run) and derives the
/// marks. recovered_ts is the start of the first bin ending after restart
/// that begins three consecutive bins at >= 90% of the pre-kill steady mean.
ThroughputTrace analyze_trace(const std::vector<std::uint64_t>& offsets_ns, double bin_width_s, double total_s,
                              double kill_ts, double restart_ts);

/// Steady publish, SIGKILL of the broker with its status segment deleted,
/// cold restart on the same port after downtime_s. Clients are left to
/// recover on their own. Throws Error(HarnessFault).
ThroughputTrace run_recovery(const RecoveryOptions& o);

void write_recovery_outputs(const ThroughputTrace& t, const RecoveryOptions& o, const std::string& dir,
                            const std::string& stem);

}  // namespace anchor::bench
