#include "anchor/bench/recovery.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "anchor/bench/harness.hpp"
#include "anchor/client/client.hpp"
#include "anchor/clock.hpp"
#include "anchor/error.hpp"

namespace anchor::bench {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

ThroughputTrace analyze_trace(const std::vector<std::uint64_t>& offsets_ns, double bin_width_s, double total_s,
                              double kill_ts, double restart_ts) {
  ThroughputTrace t;
  t.bin_width_s = bin_width_s;
  t.kill_ts = kill_ts;
  t.restart_ts = restart_ts;
  const auto nbins = static_cast<std::size_t>(std::ceil(total_s / bin_width_s));
  t.bins.assign(nbins, 0);
  const auto width_ns = static_cast<std::uint64_t>(bin_width_s * 1e9);
  for (auto off : offsets_ns) {
    const std::size_t b = off / width_ns;
    if (b < nbins) ++t.bins[b];
  }

  // Steady phase: whole bins before the kill, skipping the first second when there is room.
  std::uint64_t sum = 0;
  std::size_t count = 0;
  const std::size_t skip = kill_ts >= 3.0 ? static_cast<std::size_t>(std::ceil(1.0 / bin_width_s)) : 0;
  for (std::size_t b = skip; b < nbins && (b + 1) * bin_width_s <= kill_ts; ++b) {
    sum += t.bins[b];
    ++count;
  }
  t.steady_mean = count ? static_cast<double>(sum) / static_cast<double>(count) : 0.0;

  t.downtime_silent = true;
  for (std::size_t b = 0; b < nbins; ++b) {
    const double lo = b * bin_width_s, hi = (b + 1) * bin_width_s;
    if (lo >= kill_ts && hi <= restart_ts && t.bins[b] != 0) t.downtime_silent = false;
  }
  for (std::size_t b = 0; b < nbins; ++b) {
    if (t.bins[b] == 0 && (b == 0 || t.bins[b - 1] != 0)) ++t.zero_runs;
  }

  const double threshold = 0.9 * t.steady_mean;
  for (std::size_t b = 0; b + 2 < nbins; ++b) {
    if ((b + 1) * bin_width_s <= restart_ts) continue;
    if (t.bins[b] >= threshold && t.bins[b + 1] >= threshold && t.bins[b + 2] >= threshold && t.steady_mean > 0) {
      t.recovered_ts = b * bin_width_s;
      break;
    }
  }
  return t;
}

namespace {

bool routing_consistent(const net::Endpoint& ep) {
  std::istringstream lines(client::query_stats(ep, 1000ms));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.value("type", "") == "broker") return j.value("routing_consistent", false);
  }
  return false;
}

}  // namespace

ThroughputTrace run_recovery(const RecoveryOptions& o) {
  if (o.exe.empty()) throw Error(Errc::HarnessFault, "no executable for child processes");
  if (o.kill_after_s + o.downtime_s >= o.total_s) throw Error(Errc::UsageError, "kill + downtime must end before the run");
  const std::string dir = (fs::path(o.work_dir) / (o.label.empty() ? "recovery" : o.label)).string();
  fs::create_directories(dir);
  const std::string samples_path = (fs::path(dir) / "samples.bin").string();
  std::error_code ec;
  fs::remove(samples_path, ec);

  auto broker = BrokerChild::start(o.exe, dir, 0, o.broker_config);
  const auto ep = broker.endpoint();
  const auto reserve = static_cast<std::uint64_t>(o.rate * o.total_s * 1.2 + 1024);
  auto sub = ChildProcess::spawn({o.exe, "bench", "_subscriber", "--endpoint", ep.to_string(), "--samples",
                                  samples_path, "--reserve", std::to_string(reserve)},
                                 (fs::path(dir) / "subscriber.out").string());
  if (!wait_for_subscriptions(ep, "bench-sub", 1, 10s)) throw Error(Errc::HarnessFault, "subscriber did not subscribe");
  auto pub = ChildProcess::spawn({o.exe, "bench", "_publisher", "--endpoint", ep.to_string(), "--payload",
                                  std::to_string(o.payload), "--rate", std::to_string(o.rate), "--duration",
                                  std::to_string(o.total_s)},
                                 (fs::path(dir) / "publisher.out").string());
  if (!wait_for_subscriptions(ep, "bench-pub", 0, 10s)) throw Error(Errc::HarnessFault, "publisher did not register");
  const std::uint64_t t0 = monotonic_ns();
  auto at = [t0](double s) { return t0 + static_cast<std::uint64_t>(s * 1e9); };
  auto since = [t0](std::uint64_t ns) { return static_cast<double>(ns - t0) / 1e9; };

  sleep_until_ns(at(o.kill_after_s));
  broker.process().kill();
  const double kill_ts = since(monotonic_ns());
  fs::remove(broker.status_path(), ec);
  fs::remove(fs::path(dir) / "broker.port", ec);

  sleep_until_ns(at(o.kill_after_s + o.downtime_s));
  const double restart_ts = since(monotonic_ns());
  broker = BrokerChild::start(o.exe, dir, ep.port, o.broker_config);

  const auto pub_status =
      pub.wait_for(std::chrono::milliseconds(static_cast<std::int64_t>(o.total_s * 1000) + 20000));
  if (!pub_status || *pub_status != 0) throw Error(Errc::HarnessFault, "publisher failed (see " + dir + ")");

  std::vector<std::string> channels;
  bool consistent = false;
  try {
    channels = subscribed_channels(ep, "bench-sub");
    consistent = routing_consistent(ep);
  } catch (const Error&) {
  }
  std::this_thread::sleep_for(200ms);
  if (sub.terminate() != 0) throw Error(Errc::HarnessFault, "subscriber failed (see " + dir + ")");
  broker.process().terminate();

  std::vector<std::uint64_t> offsets;
  for (const auto& s : load_samples(samples_path)) {
    if (s.recv_ns >= t0) offsets.push_back(s.recv_ns - t0);
  }
  auto trace = analyze_trace(offsets, o.bin_width_s, o.total_s, kill_ts, restart_ts);
  trace.restored_channels = channels;
  trace.routing_consistent = consistent;
  if (!o.label.empty()) write_recovery_outputs(trace, o, o.work_dir, o.label);
  return trace;
}

void write_recovery_outputs(const ThroughputTrace& t, const RecoveryOptions& o, const std::string& dir,
                            const std::string& stem) {
  fs::create_directories(dir);
  {
    std::ofstream csv(fs::path(dir) / (stem + ".csv"));
    csv << "bin,start_s,delivered\n";
    for (std::size_t b = 0; b < t.bins.size(); ++b) csv << b << ',' << b * t.bin_width_s << ',' << t.bins[b] << '\n';
  }
  nlohmann::json j = {{"config",
                       {{"rate", o.rate},
                        {"payload_bytes", o.payload},
                        {"kill_after_s", o.kill_after_s},
                        {"downtime_s", o.downtime_s},
                        {"total_s", o.total_s},
                        {"bin_width_s", t.bin_width_s}}},
                      {"kill_ts", t.kill_ts},
                      {"restart_ts", t.restart_ts},
                      {"recovered_ts", t.recovered_ts ? nlohmann::json(*t.recovered_ts) : nlohmann::json()},
                      {"steady_mean", t.steady_mean},
                      {"zero_runs", t.zero_runs},
                      {"downtime_silent", t.downtime_silent},
                      {"restored_channels", t.restored_channels},
                      {"routing_consistent", t.routing_consistent}};
  std::ofstream js(fs::path(dir) / (stem + ".json"));
  js << j.dump(2) << "\n";
}

}  // namespace anchor::bench
