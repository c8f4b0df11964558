#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "anchor/client/client.hpp"
#include "anchor/config.hpp"
#include "anchor/demo/window.hpp"
#include "anchor/records/schema.hpp"

namespace anchor::demo {

/// One project bound at deployment time to a stub policy and its channels.
struct ProjectConfig {
  std::string project_id;
  std::string model_id = "linear-stub";
  double theta = 0.5;
  double gain = 0.5;
  double initial = 0.0;  // plant value before the first command
  std::string command_channel;
  std::string status_channel;
  std::uint8_t command_prio = 5;
  std::uint8_t status_prio = 3;
  /// 1-based command ordinals whose execution fails.
  std::set<std::uint64_t> fail_on;

  /// Throws Error(ConfigError).
  void validate() const;
};

struct DemoConfig {
  std::string run_dir = "anchor-demo";
  std::uint64_t cycle_ms = 100;
  std::size_t window = 8;
  std::size_t features = 2;  // feature 0 is the plant sensor, the rest are random walks
  WindowMode window_mode = WindowMode::Sliding;
  double norm_lo = 0.0;
  double norm_hi = 1.0;
  double noise = 0.0;  // step size of the sensor's random walk
  std::uint64_t seed = 1;
  std::uint64_t nan_every = 0;  // inject a non-finite observation every n samples
  std::uint64_t timeout_s = 60;
  std::vector<ProjectConfig> projects;
  client::ClientOptions bus;

  /// Sections [demo], [bus] and [project.ID]. Throws Error(ConfigError).
  static DemoConfig from(const Config& cfg);
  void validate() const;

  const ProjectConfig& project(const std::string& id) const;
  records::RecordSchema schema() const;

  std::string region_path() const;
  std::string log_path(const std::string& role) const;
  std::string output_path(const std::string& role) const;
};

// Record groups per project.
std::string agg_group(const std::string& project);       // f64[2 + 4*features], Ingestion
std::string feedback_group(const std::string& project);  // f64[1], Feedback
std::string ack_group(const std::string& project);       // f64[4], Feedback

// agg layout: [ref_command, burst, then mean,min,max,count per feature]
constexpr std::size_t kAggRef = 0;
constexpr std::size_t kAggBurst = 1;
constexpr std::size_t kAggFeatures = 2;
// ack layout
constexpr std::size_t kAckRef = 0;
constexpr std::size_t kAckStatus = 1;
constexpr std::size_t kAckPlant = 2;
constexpr std::size_t kAckApplied = 3;

}  // namespace anchor::demo
