#include "anchor/bench/latency.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "anchor/bench/harness.hpp"
#include "anchor/bench/stats.hpp"
#include "anchor/error.hpp"

namespace anchor::bench {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

double default_warmup(double duration_s) noexcept {
  return std::min(std::max(0.1 * duration_s, 2.0), duration_s / 2.0);
}

namespace {

std::string fmt_rate(double r) { return std::to_string(static_cast<std::uint64_t>(r)); }

}  // namespace

LatencyRun run_latency(const LatencyOptions& o) {
  if (o.exe.empty()) throw Error(Errc::HarnessFault, "no executable for child processes");
  const std::string dir =
      (fs::path(o.work_dir) / ("run_" + std::to_string(o.payload) + "_" + fmt_rate(o.rate))).string();
  fs::create_directories(dir);
  const std::string samples_path = (fs::path(dir) / "samples.bin").string();
  const std::string pub_result = (fs::path(dir) / "publisher.json").string();
  std::error_code ec;
  fs::remove(samples_path, ec);
  fs::remove(pub_result, ec);

  auto broker = BrokerChild::start(o.exe, dir, 0, o.broker_config);
  const std::string ep = broker.endpoint().to_string();
  const auto reserve = static_cast<std::uint64_t>(std::min(o.rate * o.duration_s * 1.1 + 1024, 5e7));
  auto sub = ChildProcess::spawn({o.exe, "bench", "_subscriber", "--endpoint", ep, "--samples", samples_path,
                                  "--reserve", std::to_string(reserve)},
                                 (fs::path(dir) / "subscriber.out").string());
  if (!wait_for_subscriptions(broker.endpoint(), "bench-sub", 1, 10s)) {
    throw Error(Errc::HarnessFault, "subscriber did not subscribe");
  }
  auto pub = ChildProcess::spawn({o.exe, "bench", "_publisher", "--endpoint", ep, "--payload",
                                  std::to_string(o.payload), "--rate", std::to_string(o.rate), "--duration",
                                  std::to_string(o.duration_s), "--result", pub_result},
                                 (fs::path(dir) / "publisher.out").string());
  const auto pub_status = pub.wait_for(std::chrono::milliseconds(static_cast<std::int64_t>(o.duration_s * 1000) + 20000));
  if (!pub_status || *pub_status != 0) {
    throw Error(Errc::HarnessFault, "publisher failed (see " + dir + "/publisher.out)");
  }
  std::this_thread::sleep_for(300ms);
  if (sub.terminate() != 0) throw Error(Errc::HarnessFault, "subscriber failed (see " + dir + "/subscriber.out)");
  broker.process().terminate();

  std::ifstream pj(pub_result);
  const auto result = nlohmann::json::parse(pj);
  const std::uint64_t start = result.at("start_ns");
  const std::uint64_t end = result.at("end_ns");

  LatencyRun run;
  run.payload_bytes = o.payload;
  run.target_rate = o.rate;
  run.duration_s = o.duration_s;
  run.warmup_s = o.warmup_s >= 0 ? o.warmup_s : default_warmup(o.duration_s);
  run.sent = result.at("sent");
  const std::uint64_t cutoff = start + static_cast<std::uint64_t>(run.warmup_s * 1e9);
  for (const auto& s : load_samples(samples_path)) {
    if (s.send_ns < cutoff || s.send_ns > end) continue;
    run.send_ns.push_back(s.send_ns);
    run.samples.push_back(s.recv_ns >= s.send_ns ? s.recv_ns - s.send_ns : 0);
  }
  const double window_s = end > cutoff ? static_cast<double>(end - cutoff) / 1e9 : 0.0;
  run.achieved_rate = window_s > 0 ? static_cast<double>(run.samples.size()) / window_s : 0.0;
  run.valid = run.achieved_rate >= 0.95 * o.rate;

  if (!o.label.empty()) write_latency_outputs(run, o.work_dir, o.label);
  if (!run.valid && !o.allow_invalid) {
    throw Error(Errc::RateUnachievable, "achieved " + std::to_string(run.achieved_rate) + " msg/s of " +
                                            fmt_rate(o.rate) + " target");
  }
  return run;
}

void write_latency_outputs(const LatencyRun& run, const std::string& dir, const std::string& stem) {
  fs::create_directories(dir);
  {
    std::ofstream csv(fs::path(dir) / (stem + ".csv"));
    csv << "seq,send_ns,latency_ns\n";
    for (std::size_t i = 0; i < run.samples.size(); ++i) {
      csv << i << ',' << run.send_ns[i] << ',' << run.samples[i] << '\n';
    }
  }
  nlohmann::json summary = {{"config",
                             {{"payload_bytes", run.payload_bytes},
                              {"rate", run.target_rate},
                              {"duration_s", run.duration_s},
                              {"warmup_s", run.warmup_s}}},
                            {"n", run.samples.size()},
                            {"sent", run.sent},
                            {"achieved_rate", run.achieved_rate},
                            {"valid", run.valid}};
  if (!run.samples.empty()) {
    const auto p = percentiles(run.samples);
    summary["P50"] = p[0];
    summary["P90"] = p[1];
    summary["P99"] = p[2];
  } else {
    summary["P50"] = summary["P90"] = summary["P99"] = nullptr;
  }
  std::ofstream js(fs::path(dir) / (stem + ".json"));
  js << summary.dump(2) << "\n";
}

std::vector<GridConfig> default_grid() { return {{128, 1000}, {128, 5000}, {1024, 1000}, {1024, 5000}}; }

std::vector<GridCell> run_grid(const LatencyOptions& base, const std::vector<GridConfig>& grid, int reps) {
  std::vector<GridCell> cells;
  for (const auto& g : grid) cells.push_back({g, {}, {}, {}});
  // Repetitions are interleaved across configurations.
  for (int r = 0; r < reps; ++r) {
    for (auto& cell : cells) {
      LatencyOptions o = base;
      o.payload = cell.config.payload;
      o.rate = cell.config.rate;
      o.label = "latency_" + std::to_string(o.payload) + "_" + fmt_rate(o.rate) + "_r" + std::to_string(r + 1);
      const auto run = run_latency(o);
      cell.percentiles.push_back(percentiles(run.samples));
      cell.achieved.push_back(run.achieved_rate);
      spdlog::info("{} B @ {} msg/s rep {}: P50 {} ns P90 {} ns P99 {} ns (n={})", o.payload, fmt_rate(o.rate), r + 1,
                   cell.percentiles.back()[0], cell.percentiles.back()[1], cell.percentiles.back()[2],
                   run.samples.size());
    }
  }
  nlohmann::json out = nlohmann::json::array();
  for (auto& cell : cells) {
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> v;
      for (const auto& p : cell.percentiles) v.push_back(static_cast<double>(p[k]));
      cell.median_percentiles.push_back(median(v));
    }
    out.push_back({{"payload_bytes", cell.config.payload},
                   {"rate", cell.config.rate},
                   {"repetitions", cell.percentiles.size()},
                   {"runs", cell.percentiles},
                   {"achieved_rate", cell.achieved},
                   {"median_P50", cell.median_percentiles[0]},
                   {"median_P90", cell.median_percentiles[1]},
                   {"median_P99", cell.median_percentiles[2]}});
  }
  std::ofstream js(fs::path(base.work_dir) / "grid.json");
  js << out.dump(2) << "\n";
  return cells;
}

}  // namespace anchor::bench
