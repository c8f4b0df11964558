#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace anchor::bench {

struct LatencyOptions {
  std::size_t payload = 128;
  double rate = 1000.0;
  double duration_s = 30.0;
  double warmup_s = -1.0;  // negative: 10% of duration, at least 2 s, at most half the run
  std::string exe;         // anchorctl binary used for the child processes
  std::string work_dir = "bench-out";
  std::string label;       // file stem for the CSV and JSON outputs; empty skips them
  std::string broker_config;
  bool allow_invalid = false;
};

double default_warmup(double duration_s) noexcept;

struct LatencyRun {
  std::size_t payload_bytes = 0;
  double target_rate = 0;
  double duration_s = 0;
  double warmup_s = 0;
  std::vector<std::uint64_t> samples;  // delivery latency, ns, warmup excluded
  std::vector<std::uint64_t> send_ns;  // aligned with samples
  double achieved_rate = 0;
  std::uint64_t sent = 0;
  bool valid = false;  // achieved within 5% of target
};

/// Starts a broker, a subscriber and a paced publisher as separate processes
/// and collects per-message latency. Throws Error(RateUnachievable) when the
/// achieved rate is below 95% of target unless allow_invalid.
LatencyRun run_latency(const LatencyOptions& o);

/// CSV (seq,send_ns,latency_ns) and JSON summary {config, P50, P90, P99, n}.
void write_latency_outputs(const LatencyRun& run, const std::string& dir, const std::string& stem);

struct GridConfig {
  std::size_t payload;
  double rate;
};
/// Ordering of the grid configurations: 128/1k, 128/5k, 1024/1k, 1024/5k.
std::vector<GridConfig> default_grid();

struct GridCell {
  GridConfig config;
  std::vector<std::vector<std::uint64_t>> percentiles;  // per repetition: P50, P90, P99
  std::vector<double> achieved;
  std::vector<double> median_percentiles;                // median over repetitions
};

/// Runs every configuration `reps` times. Writes per-run outputs plus
/// grid.json into work_dir.
std::vector<GridCell> run_grid(const LatencyOptions& base, const std::vector<GridConfig>& grid, int reps);

}  // namespace anchor::bench
