#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "anchor/demo/messages.hpp"
#include "anchor/demo/project_config.hpp"
#include "anchor/demo/window.hpp"
#include "anchor/records/region.hpp"

namespace anchor::demo {

// ---- synthetic source format: "<project>|<index>|v0,v1,..." ----

struct RawObservation {
  std::string project_id;
  std::uint64_t index = 0;
  std::vector<double> values;
};

std::string format_observation(const RawObservation& o);
std::optional<RawObservation> parse_observation(std::string_view line);

/// Observation log body: project, index and the normalized vector.
wire::Bytes encode_observation(const RawObservation& normalized);
RawObservation decode_observation(wire::ByteView body);

/// Parse -> Clean -> Normalize -> window. Malformed and non-finite inputs
/// are counted and skipped.
class Preprocessor {
 public:
  Preprocessor(std::size_t window, std::size_t dims, WindowMode mode, double lo, double hi);

  struct Result {
    RawObservation normalized;
    std::optional<std::vector<FeatureAggregate>> aggregates;
  };
  std::optional<Result> ingest(std::string_view line);

  std::uint64_t malformed() const noexcept { return malformed_; }
  std::uint64_t non_finite() const noexcept { return non_finite_; }
  const WindowState& window() const noexcept { return window_; }

 private:
  WindowState window_;
  double lo_, hi_;
  std::uint64_t malformed_ = 0;
  std::uint64_t non_finite_ = 0;
};

/// The deterministic stub policy. count == 0 yields a Hold flagged stale.
CommandMsg infer(double mean, std::uint64_t count, const ProjectConfig& project, std::uint64_t cycle);
/// Reads the project's aggregate group from snap.
CommandMsg infer(const records::Snapshot& snap, const ProjectConfig& project, std::uint64_t cycle);

/// Simulated remote endpoint: one scalar plant per project plus the failure
/// schedule. Pure, so a replay reproduces a run's events exactly.
class ExecutorCore {
 public:
  explicit ExecutorCore(const std::vector<ProjectConfig>& projects);

  /// Started event, then Success or Failure. Throws Error(ConfigError) for an unknown project.
  std::pair<EventMsg, EventMsg> execute(std::uint64_t command_seq, const CommandMsg& c);
  double plant(const std::string& project) const;

 private:
  struct Plant {
    double value;
    std::uint64_t ordinal = 0;
    const ProjectConfig* config;
  };
  std::map<std::string, Plant> plants_;
};

// ---- role processes; each returns a process exit code ----

int run_producer(const DemoConfig& cfg, const std::atomic<bool>& stop);
int run_inference(const DemoConfig& cfg, std::uint64_t cycles, const std::atomic<bool>& stop);
int run_executor(const DemoConfig& cfg, const std::atomic<bool>& stop);
int run_materializer(const DemoConfig& cfg, const std::atomic<bool>& stop);

}  // namespace anchor::demo
