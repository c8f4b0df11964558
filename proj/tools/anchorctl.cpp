// anchorctl: broker, gateway, demo roles, benchmarks and inspection tools.

#include <signal.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "anchor/bench/harness.hpp"
#include "anchor/bench/latency.hpp"
#include "anchor/bench/recovery.hpp"
#include "anchor/bench/stats.hpp"
#include "anchor/broker/broker_server.hpp"
#include "anchor/client/client.hpp"
#include "anchor/config.hpp"
#include "anchor/demo/audit.hpp"
#include "anchor/demo/roles.hpp"
#include "anchor/demo/supervisor.hpp"
#include "anchor/error.hpp"
#include "anchor/gateway/gateway.hpp"
#include "anchor/process.hpp"
#include "anchor/records/region.hpp"

namespace fs = std::filesystem;
using namespace anchor;
using namespace std::chrono_literals;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitMismatch = 4;

std::atomic<bool> g_stop{false};
std::atomic<broker::BrokerServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  g_stop.store(true);
  if (auto* s = g_server.load()) s->stop();
}

void install_signals() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  ::sigaction(SIGTERM, &sa, nullptr);
  ::sigaction(SIGINT, &sa, nullptr);
  ::signal(SIGPIPE, SIG_IGN);
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::UsageError:
      return kExitUsage;
    case Errc::ConfigError:
    case Errc::SchemaInvalid:
    case Errc::PatternInvalid:
    case Errc::MalformedTopic:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

Config load_config(const std::string& path) { return path.empty() ? Config{} : Config::load(path); }

void wait_for_stop() {
  while (!g_stop.load()) std::this_thread::sleep_for(50ms);
}

// ---- broker ----

struct BrokerArgs {
  std::string config;
  std::string listen;
  std::string status;
  std::string port_file;
  bool check = false;
};

int cmd_broker(const BrokerArgs& a) {
  const auto cfg = load_config(a.config);
  auto bc = broker::BrokerConfig::from(cfg);
  bc.validate();
  broker::ServerOptions so;
  so.listen = net::Endpoint::parse(a.listen.empty() ? cfg.get_string("broker", "listen", "127.0.0.1:7400") : a.listen);
  so.status_path = a.status.empty() ? cfg.get_string("broker", "status_path", "") : a.status;
  so.port_file = a.port_file;
  if (a.check) {
    std::cout << "config ok\n";
    return 0;
  }
  broker::BrokerServer server(bc, so);
  g_server.store(&server);
  if (g_stop.load()) server.stop();
  server.run();
  g_server.store(nullptr);
  return 0;
}

// ---- gateway ----

int cmd_gateway(const std::string& config, bool check) {
  auto gc = gateway::GatewayConfig::from(Config::load(config));
  if (check) {
    std::cout << "config ok\n";
    return 0;
  }
  gateway::Gateway gw(gc);
  if (!gw.wait_ready(10s)) spdlog::warn("gateway: not every cluster is reachable yet");
  spdlog::info("gateway '{}' running {} links", gc.gateway_id, gc.links.size());
  wait_for_stop();
  const auto s = gw.stats();
  gw.stop();
  spdlog::info("gateway stopped: observed {} forwarded {} duplicates {}", s.observed, s.forwarded, s.duplicates);
  return 0;
}

// ---- demo ----

struct DemoArgs {
  std::string config;
  std::string run_dir;
  std::uint64_t cycles = 100;
  bool check = false;
};

demo::DemoConfig load_demo(const DemoArgs& a) {
  auto cfg = demo::DemoConfig::from(Config::load(a.config));
  if (!a.run_dir.empty()) cfg.run_dir = a.run_dir;
  return cfg;
}

void copy_config(const demo::DemoConfig& cfg, const std::string& path) {
  fs::copy_file(path, fs::path(cfg.run_dir) / "demo.conf", fs::copy_options::overwrite_existing);
}

int cmd_demo_role(const std::string& role, const DemoArgs& a) {
  const auto cfg = load_demo(a);
  if (a.check) {
    std::cout << "config ok\n";
    return 0;
  }
  if (role == "init") {
    demo::prepare_run_dir(cfg);
    copy_config(cfg, a.config);
    std::cout << cfg.region_path() << "\n";
    return 0;
  }
  if (role == "producer") return demo::run_producer(cfg, g_stop);
  if (role == "inference") return demo::run_inference(cfg, a.cycles, g_stop);
  if (role == "executor") return demo::run_executor(cfg, g_stop);
  return demo::run_materializer(cfg, g_stop);
}

int cmd_demo_run(const DemoArgs& a) {
  const auto cfg = load_demo(a);
  if (a.check) {
    std::cout << "config ok\n";
    return 0;
  }
  const auto out = demo::run_demo(cfg, fs::absolute(a.config).string(), a.cycles, self_exe_path());
  if (fs::exists(cfg.run_dir)) copy_config(cfg, a.config);
  for (const auto& [role, code] : out.role_status) spdlog::info("{} exited with {}", role, code);
  if (!out.error.empty()) spdlog::error("{}", out.error);
  if (out.exit_code != kExitRuntime || !out.audit.projects.empty()) std::cout << out.audit.summary_json() << "\n";
  for (const auto& f : out.audit.failures) spdlog::error("audit: {}", f);
  return out.exit_code;
}

// ---- records / log ----

nlohmann::json values_json(const records::GroupValues& v) {
  return std::visit(
      [](const auto& xs) -> nlohmann::json {
        using T = typename std::decay_t<decltype(xs)>::value_type;
        if constexpr (std::is_same_v<T, std::string>) {
          nlohmann::json arr = nlohmann::json::array();
          for (const auto& s : xs) {
            std::string hex;
            for (unsigned char c : s) {
              static const char* digits = "0123456789abcdef";
              hex += digits[c >> 4];
              hex += digits[c & 15];
            }
            arr.push_back(hex);
          }
          return arr;
        } else {
          return nlohmann::json(xs);
        }
      },
      v);
}

int cmd_records_dump(const std::string& path) {
  auto region = records::RegionHandle::open(path, records::AccessRole::Reader);
  const auto snap = region.read_snapshot();
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : snap.groups) {
    groups.push_back({{"name", g.name}, {"version_counter", g.version_counter}, {"values", values_json(g.values)}});
  }
  std::cout << nlohmann::json{{"path", path},
                              {"schema_version", snap.schema_version},
                              {"version_counter", snap.version_counter},
                              {"groups", groups}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_log_replay(const std::string& path, const std::string& verify, std::string config) {
  if (config.empty()) {
    const auto guess = fs::path(path).parent_path().parent_path() / "demo.conf";
    if (!fs::exists(guess)) throw Error(Errc::UsageError, "no --config given and no demo.conf next to the run");
    config = guess.string();
  }
  const auto cfg = demo::DemoConfig::from(Config::load(config));
  const auto r = demo::replay_run(path, cfg.projects, verify);
  nlohmann::json j = {{"match", r.match()}, {"replayed", r.reproduced}, {"recorded", r.recorded},
                      {"corrupt_tail", r.corrupt_tail}};
  if (r.divergence) {
    j["divergence_index"] = *r.divergence;
    j["divergence_cycle"] = r.divergence_cycle ? nlohmann::json(*r.divergence_cycle) : nlohmann::json();
    j["detail"] = r.detail;
  }
  std::cout << j.dump() << "\n";
  return r.match() ? 0 : kExitMismatch;
}

// ---- bench ----

struct LatencyArgs {
  std::size_t payload = 128;
  double rate = 1000;
  double duration = 30;
  double warmup = -1;
  bool grid = false;
  int reps = 1;
  std::string out = "bench-out";
  std::string broker_config;
  bool allow_invalid = false;
};

int cmd_bench_latency(const LatencyArgs& a) {
  bench::LatencyOptions o;
  o.payload = a.payload;
  o.rate = a.rate;
  o.duration_s = a.duration;
  o.warmup_s = a.warmup;
  o.exe = self_exe_path();
  o.work_dir = a.out;
  o.broker_config = a.broker_config;
  o.allow_invalid = a.allow_invalid;
  if (a.grid) {
    const auto cells = bench::run_grid(o, bench::default_grid(), a.reps);
    for (const auto& c : cells) {
      std::cout << nlohmann::json{{"payload_bytes", c.config.payload},
                                  {"rate", c.config.rate},
                                  {"median_P50", c.median_percentiles[0]},
                                  {"median_P90", c.median_percentiles[1]},
                                  {"median_P99", c.median_percentiles[2]}}
                       .dump()
                << "\n";
    }
    return 0;
  }
  for (int r = 0; r < a.reps; ++r) {
    o.label = "latency_" + std::to_string(o.payload) + "_" + std::to_string(static_cast<std::uint64_t>(o.rate)) +
              "_r" + std::to_string(r + 1);
    const auto run = bench::run_latency(o);
    nlohmann::json j = {{"payload_bytes", o.payload}, {"rate", o.rate}, {"n", run.samples.size()},
                        {"achieved_rate", run.achieved_rate}, {"valid", run.valid}};
    if (!run.samples.empty()) {
      const auto p = bench::percentiles(run.samples);
      j["P50"] = p[0];
      j["P90"] = p[1];
      j["P99"] = p[2];
    }
    std::cout << j.dump() << "\n";
  }
  return 0;
}

struct RecoveryArgs {
  bench::RecoveryOptions o;
  int reps = 1;
};

int cmd_bench_recovery(RecoveryArgs a) {
  a.o.exe = self_exe_path();
  for (int r = 0; r < a.reps; ++r) {
    a.o.label = "recovery_r" + std::to_string(r + 1);
    const auto t = bench::run_recovery(a.o);
    std::cout << nlohmann::json{{"rep", r + 1},
                                {"kill_ts", t.kill_ts},
                                {"restart_ts", t.restart_ts},
                                {"recovered_ts", t.recovered_ts ? nlohmann::json(*t.recovered_ts) : nlohmann::json()},
                                {"steady_mean", t.steady_mean},
                                {"downtime_silent", t.downtime_silent},
                                {"zero_runs", t.zero_runs},
                                {"restored_channels", t.restored_channels}}
                     .dump()
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  install_signals();
  auto logger = spdlog::stderr_color_mt("anchor");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%Y-%m-%dT%H:%M:%S.%e [%l] %v");

  CLI::App app{"anchorctl: message bus, record store and closed-loop demo"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

  BrokerArgs broker_args;
  auto* broker_cmd = app.add_subcommand("broker", "Run a broker until signaled");
  broker_cmd->add_option("--config", broker_args.config, "Config file ([broker] section)");
  broker_cmd->add_option("--listen", broker_args.listen, "host:port (port 0 picks one)");
  broker_cmd->add_option("--status", broker_args.status, "Status segment path");
  broker_cmd->add_option("--port-file", broker_args.port_file, "Write the bound port here");
  broker_cmd->add_flag("--check-config", broker_args.check, "Validate the configuration and exit");

  std::string gateway_config;
  bool gateway_check = false;
  auto* gateway_cmd = app.add_subcommand("gateway", "Run gateway links between clusters");
  gateway_cmd->add_option("--config", gateway_config, "Config file")->required();
  gateway_cmd->add_flag("--check-config", gateway_check, "Validate the configuration and exit");

  DemoArgs demo_args;
  auto* demo_cmd = app.add_subcommand("demo", "Closed-loop demo roles");
  demo_cmd->require_subcommand(1);
  std::string demo_role;
  for (const char* role : {"init", "producer", "inference", "executor", "materializer", "run"}) {
    auto* sub = demo_cmd->add_subcommand(role, std::string("demo ") + role);
    sub->add_option("--config", demo_args.config, "Demo config file")->required();
    sub->add_option("--run-dir", demo_args.run_dir, "Overrides [demo] run_dir");
    sub->add_flag("--check-config", demo_args.check, "Validate the configuration and exit");
    if (std::string(role) == "inference" || std::string(role) == "run") {
      sub->add_option("--cycles", demo_args.cycles, "Cycles to run")->capture_default_str();
    }
    sub->callback([&demo_role, role] { demo_role = role; });
  }

  auto* bench_cmd = app.add_subcommand("bench", "Benchmarks");
  bench_cmd->require_subcommand(1);
  LatencyArgs lat;
  auto* lat_cmd = bench_cmd->add_subcommand("latency", "1x1 delivery latency");
  lat_cmd->add_option("--payload", lat.payload, "Payload bytes")->capture_default_str();
  lat_cmd->add_option("--rate", lat.rate, "Messages per second")->capture_default_str();
  lat_cmd->add_option("--duration", lat.duration, "Seconds per run")->capture_default_str();
  lat_cmd->add_option("--warmup", lat.warmup, "Warmup seconds (default 10% of duration, min 2 s)");
  lat_cmd->add_flag("--grid", lat.grid, "Run {128,1024} B x {1000,5000} msg/s");
  lat_cmd->add_option("--reps", lat.reps, "Repetitions per configuration")->capture_default_str();
  lat_cmd->add_option("--out", lat.out, "Output directory")->capture_default_str();
  lat_cmd->add_option("--broker-config", lat.broker_config, "Config file for the spawned broker");
  lat_cmd->add_flag("--allow-invalid", lat.allow_invalid, "Keep runs below 95% of the target rate");

  RecoveryArgs rec;
  auto* rec_cmd = bench_cmd->add_subcommand("recovery", "Crash-and-restart throughput trace");
  rec_cmd->add_option("--rate", rec.o.rate, "Messages per second")->capture_default_str();
  rec_cmd->add_option("--payload", rec.o.payload, "Payload bytes")->capture_default_str();
  rec_cmd->add_option("--kill-after", rec.o.kill_after_s, "Seconds before the kill")->capture_default_str();
  rec_cmd->add_option("--downtime", rec.o.downtime_s, "Seconds before the restart")->capture_default_str();
  rec_cmd->add_option("--total", rec.o.total_s, "Total seconds")->capture_default_str();
  rec_cmd->add_option("--bin-width", rec.o.bin_width_s, "Bin width in seconds")->capture_default_str();
  rec_cmd->add_option("--out", rec.o.work_dir, "Output directory")->capture_default_str();
  rec_cmd->add_option("--broker-config", rec.o.broker_config, "Config file for the spawned broker");
  rec_cmd->add_option("--reps", rec.reps, "Repetitions")->capture_default_str();

  bench::PublisherOptions pub;
  std::string pub_endpoint;
  auto* pub_cmd = bench_cmd->add_subcommand("_publisher", "")->group("");
  pub_cmd->add_option("--endpoint", pub_endpoint)->required();
  pub_cmd->add_option("--payload", pub.payload);
  pub_cmd->add_option("--rate", pub.rate);
  pub_cmd->add_option("--duration", pub.duration_s);
  pub_cmd->add_option("--result", pub.result_path);

  bench::SubscriberOptions subo;
  std::string sub_endpoint;
  auto* sub_cmd = bench_cmd->add_subcommand("_subscriber", "")->group("");
  sub_cmd->add_option("--endpoint", sub_endpoint)->required();
  sub_cmd->add_option("--samples", subo.samples_path)->required();
  sub_cmd->add_option("--reserve", subo.reserve);

  std::string region_path;
  auto* records_cmd = app.add_subcommand("records", "Record store inspection");
  records_cmd->require_subcommand(1);
  auto* dump_cmd = records_cmd->add_subcommand("dump", "Print a consistent snapshot as JSON");
  dump_cmd->add_option("--region", region_path, "Region file")->required();

  std::string log_path, verify_path, log_config;
  auto* log_cmd = app.add_subcommand("log", "Replay log tools");
  log_cmd->require_subcommand(1);
  auto* replay_cmd = log_cmd->add_subcommand("replay", "Re-execute logged commands and compare events");
  replay_cmd->add_option("--path", log_path, "Executor log")->required();
  replay_cmd->add_option("--verify-against", verify_path, "Log holding the reference events");
  replay_cmd->add_option("--config", log_config, "Demo config (default: demo.conf of the run)");

  std::string stats_endpoint = "127.0.0.1:7400";
  auto* stats_cmd = app.add_subcommand("stats", "Dump broker statistics");
  stats_cmd->add_option("--endpoint", stats_endpoint, "Broker host:port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (broker_cmd->parsed()) return cmd_broker(broker_args);
    if (gateway_cmd->parsed()) return cmd_gateway(gateway_config, gateway_check);
    if (demo_cmd->parsed()) {
      if (demo_role == "run") return cmd_demo_run(demo_args);
      return cmd_demo_role(demo_role, demo_args);
    }
    if (lat_cmd->parsed()) return cmd_bench_latency(lat);
    if (rec_cmd->parsed()) return cmd_bench_recovery(rec);
    if (pub_cmd->parsed()) {
      pub.endpoint = net::Endpoint::parse(pub_endpoint);
      return bench::run_publisher(pub, g_stop);
    }
    if (sub_cmd->parsed()) {
      subo.endpoint = net::Endpoint::parse(sub_endpoint);
      return bench::run_subscriber(subo, g_stop);
    }
    if (dump_cmd->parsed()) return cmd_records_dump(region_path);
    if (replay_cmd->parsed()) return cmd_log_replay(log_path, verify_path, log_config);
    if (stats_cmd->parsed()) {
      std::cout << client::query_stats(net::Endpoint::parse(stats_endpoint), 2000ms);
      return 0;
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
