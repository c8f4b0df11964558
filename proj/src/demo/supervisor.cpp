#include "anchor/demo/supervisor.hpp"

#include <signal.h>
#include <stdlib.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "anchor/client/client.hpp"
#include "anchor/error.hpp"
#include "anchor/process.hpp"
#include "anchor/records/region.hpp"

namespace anchor::demo {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

void prepare_run_dir(const DemoConfig& cfg) {
  std::error_code ec;
  fs::remove_all(cfg.run_dir, ec);
  fs::create_directories(fs::path(cfg.run_dir) / "logs");
  records::RegionHandle::create(cfg.region_path(), cfg.schema());
}

namespace {

std::uint16_t wait_for_port(const std::string& path, ChildProcess& broker, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    std::ifstream in(path);
    unsigned port = 0;
    if (in >> port && port != 0) return static_cast<std::uint16_t>(port);
    if (broker.try_wait()) throw Error(Errc::HarnessFault, "broker exited during startup");
    std::this_thread::sleep_for(10ms);
  }
  throw Error(Errc::HarnessFault, "broker did not publish its port");
}

std::map<std::string, std::size_t> subscription_counts(const net::Endpoint& ep) {
  std::map<std::string, std::size_t> counts;
  std::istringstream lines(client::query_stats(ep, 1000ms));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.value("type", "") == "session") counts[j.at("node_id").get<std::string>()] = j.at("subscriptions").size();
  }
  return counts;
}

void wait_for_subscribers(const net::Endpoint& ep, std::size_t expected, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    try {
      const auto counts = subscription_counts(ep);
      auto at_least = [&](const char* node) {
        auto it = counts.find(node);
        return it != counts.end() && it->second >= expected;
      };
      if (at_least("executor") && at_least("materializer")) return;
    } catch (const Error&) {
    }
    std::this_thread::sleep_for(20ms);
  }
  throw Error(Errc::HarnessFault, "executor and materializer did not subscribe in time");
}

}  // namespace

RunOutcome run_demo(const DemoConfig& cfg, const std::string& config_path, std::uint64_t cycles,
                    const std::string& exe) {
  RunOutcome out;
  prepare_run_dir(cfg);
  const std::string port_file = (fs::path(cfg.run_dir) / "broker.port").string();
  const std::string status_file = (fs::path(cfg.run_dir) / "broker.status").string();

  ::unsetenv("ANCHOR_NODE_ID");
  ChildProcess broker = ChildProcess::spawn({exe, "broker", "--config", config_path, "--listen", "127.0.0.1:0",
                                             "--port-file", port_file, "--status", status_file},
                                            cfg.output_path("broker"));
  std::map<std::string, ChildProcess> roles;
  try {
    const std::uint16_t port = wait_for_port(port_file, broker, 10s);
    const net::Endpoint ep{"127.0.0.1", port};
    ::setenv("ANCHOR_ENDPOINT", ep.to_string().c_str(), 1);

    auto spawn_role = [&](const std::string& role, std::vector<std::string> extra = {}) {
      std::vector<std::string> argv{exe, "demo", role, "--config", config_path, "--run-dir", cfg.run_dir};
      argv.insert(argv.end(), extra.begin(), extra.end());
      roles.emplace(role, ChildProcess::spawn(argv, cfg.output_path(role)));
    };
    spawn_role("executor");
    spawn_role("materializer");
    wait_for_subscribers(ep, cfg.projects.size(), std::chrono::seconds(cfg.timeout_s));
    spawn_role("producer");
    spawn_role("inference", {"--cycles", std::to_string(cycles)});

    const auto budget = std::chrono::seconds(cfg.timeout_s) + std::chrono::milliseconds(4 * cycles * cfg.cycle_ms);
    const auto status = roles.at("inference").wait_for(std::chrono::duration_cast<std::chrono::milliseconds>(budget));
    if (!status) {
      out.error = "inference did not finish in time";
      roles.at("inference").kill();
    }
    // Let the last outcome events settle before stopping the others.
    std::this_thread::sleep_for(std::chrono::milliseconds(std::max<std::uint64_t>(2 * cfg.cycle_ms, 200)));
  } catch (const Error& e) {
    out.error = e.what();
  }

  for (auto& [role, child] : roles) out.role_status[role] = child.try_wait() ? *child.try_wait() : child.terminate();
  out.role_status["broker"] = broker.terminate();
  ::unsetenv("ANCHOR_ENDPOINT");

  if (!out.error.empty()) {
    spdlog::error("demo run: {}", out.error);
    out.exit_code = 3;
    return out;
  }
  for (const auto& [role, code] : out.role_status) {
    // SIGTERM-initiated shutdowns exit 0; anything else is a role failure.
    if (code != 0 && role != "broker") {
      out.error = role + " exited with status " + std::to_string(code);
      out.exit_code = 3;
    }
  }
  out.audit = audit_run(cfg, cycles);
  if (out.exit_code == 0 && !out.audit.ok()) out.exit_code = 4;
  return out;
}

}  // namespace anchor::demo
