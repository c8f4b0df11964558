#include "anchor/demo/project_config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>

#include "anchor/error.hpp"
#include "anchor/wire/topic.hpp"

namespace anchor::demo {

namespace {

constexpr std::size_t kMaxProjectId = 20;  // leaves room for group suffixes

std::uint8_t prio_value(std::int64_t v, const std::string& what) {
  if (v < 0 || v > 7) throw Error(Errc::ConfigError, what + " must be 0-7");
  return static_cast<std::uint8_t>(v);
}

}  // namespace

std::string agg_group(const std::string& project) { return project + ".agg"; }
std::string feedback_group(const std::string& project) { return project + ".feedback"; }
std::string ack_group(const std::string& project) { return project + ".ack"; }

void ProjectConfig::validate() const {
  if (!wire::is_valid_token(project_id) || project_id.size() > kMaxProjectId || project_id.find('.') != std::string::npos) {
    throw Error(Errc::ConfigError, "project id '" + project_id + "'");
  }
  if (!wire::is_valid_token(command_channel)) throw Error(Errc::ConfigError, project_id + ": command channel");
  if (!wire::is_valid_token(status_channel)) throw Error(Errc::ConfigError, project_id + ": status channel");
  if (command_channel == status_channel) throw Error(Errc::ConfigError, project_id + ": channels must differ");
  if (command_prio > 7 || status_prio > 7) throw Error(Errc::ConfigError, project_id + ": prio out of range");
  if (!std::isfinite(theta) || !std::isfinite(gain) || !std::isfinite(initial)) {
    throw Error(Errc::ConfigError, project_id + ": theta, gain and initial must be finite");
  }
  for (auto n : fail_on) {
    if (n == 0) throw Error(Errc::ConfigError, project_id + ": fail_on ordinals start at 1");
  }
}

DemoConfig DemoConfig::from(const Config& cfg) {
  DemoConfig d;
  d.run_dir = cfg.get_string("demo", "run_dir", d.run_dir);
  d.cycle_ms = static_cast<std::uint64_t>(cfg.get_int("demo", "cycle_ms", 100));
  d.window = static_cast<std::size_t>(cfg.get_int("demo", "window", 8));
  d.features = static_cast<std::size_t>(cfg.get_int("demo", "features", 2));
  const std::string mode = cfg.get_string("demo", "window_mode", "sliding");
  if (mode == "sliding") d.window_mode = WindowMode::Sliding;
  else if (mode == "tumbling") d.window_mode = WindowMode::Tumbling;
  else throw Error(Errc::ConfigError, "window_mode must be sliding or tumbling");
  d.norm_lo = cfg.get_double("demo", "norm_lo", 0.0);
  d.norm_hi = cfg.get_double("demo", "norm_hi", 1.0);
  d.noise = cfg.get_double("demo", "noise", 0.0);
  d.seed = static_cast<std::uint64_t>(cfg.get_int("demo", "seed", 1));
  d.nan_every = static_cast<std::uint64_t>(cfg.get_int("demo", "nan_every", 0));
  d.timeout_s = static_cast<std::uint64_t>(cfg.get_int("demo", "timeout_s", 60));
  d.bus = client::ClientOptions::from(cfg, "bus");

  for (const auto& id : cfg.sections_with_prefix("project.")) {
    const std::string s = "project." + id;
    ProjectConfig p;
    p.project_id = id;
    p.model_id = cfg.get_string(s, "model_id", p.model_id);
    p.theta = cfg.get_double(s, "theta", p.theta);
    p.gain = cfg.get_double(s, "gain", p.gain);
    p.initial = cfg.get_double(s, "initial", p.initial);
    p.command_channel = cfg.get_string(s, "command_channel", "cmd_" + id);
    p.status_channel = cfg.get_string(s, "status_channel", "status_" + id);
    p.command_prio = prio_value(cfg.get_int(s, "command_prio", 5), s + ".command_prio");
    p.status_prio = prio_value(cfg.get_int(s, "status_prio", 3), s + ".status_prio");
    for (const auto& item : cfg.get_list(s, "fail_on")) {
      std::uint64_t n = 0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), n);
      if (ec != std::errc{} || ptr != item.data() + item.size()) {
        throw Error(Errc::ConfigError, s + ".fail_on: '" + item + "' is not an ordinal");
      }
      p.fail_on.insert(n);
    }
    d.projects.push_back(std::move(p));
  }
  d.validate();
  return d;
}

void DemoConfig::validate() const {
  if (projects.empty()) throw Error(Errc::ConfigError, "no [project.*] sections");
  if (projects.size() * 3 > records::kMaxGroups) throw Error(Errc::ConfigError, "too many projects for one region");
  if (cycle_ms == 0) throw Error(Errc::ConfigError, "cycle_ms must be positive");
  if (window == 0) throw Error(Errc::ConfigError, "window must be at least 1");
  if (features == 0 || features > 16) throw Error(Errc::ConfigError, "features must be 1-16");
  if (!(norm_hi > norm_lo)) throw Error(Errc::ConfigError, "norm_hi must exceed norm_lo");
  if (!(noise >= 0.0)) throw Error(Errc::ConfigError, "noise must be non-negative");
  std::set<std::string> ids, channels;
  for (const auto& p : projects) {
    p.validate();
    if (!ids.insert(p.project_id).second) throw Error(Errc::ConfigError, "duplicate project " + p.project_id);
    if (!channels.insert(p.command_channel).second || !channels.insert(p.status_channel).second) {
      throw Error(Errc::ConfigError, p.project_id + ": channel shared with another project");
    }
  }
}

const ProjectConfig& DemoConfig::project(const std::string& id) const {
  for (const auto& p : projects) {
    if (p.project_id == id) return p;
  }
  throw Error(Errc::ConfigError, "unknown project '" + id + "'");
}

records::RecordSchema DemoConfig::schema() const {
  records::RecordSchema s;
  s.schema_version = 1;
  for (const auto& p : projects) {
    s.groups.push_back({agg_group(p.project_id), records::ElementType::F64,
                        static_cast<std::uint32_t>(kAggFeatures + 4 * features), records::WriterRole::Ingestion, 0});
    s.groups.push_back({feedback_group(p.project_id), records::ElementType::F64, 1, records::WriterRole::Feedback, 0});
    s.groups.push_back({ack_group(p.project_id), records::ElementType::F64, 4, records::WriterRole::Feedback, 0});
  }
  return s;
}

std::string DemoConfig::region_path() const { return (std::filesystem::path(run_dir) / "region.anc").string(); }

std::string DemoConfig::log_path(const std::string& role) const {
  return (std::filesystem::path(run_dir) / "logs" / (role + ".log")).string();
}

std::string DemoConfig::output_path(const std::string& role) const {
  return (std::filesystem::path(run_dir) / "logs" / (role + ".out")).string();
}

}  // namespace anchor::demo
