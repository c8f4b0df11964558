#include "anchor/bench/harness.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "anchor/client/client.hpp"
#include "anchor/clock.hpp"
#include "anchor/error.hpp"

namespace anchor::bench {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

BrokerChild BrokerChild::start(const std::string& exe, const std::string& work_dir, std::uint16_t port,
                               const std::string& config_path) {
  fs::create_directories(work_dir);
  BrokerChild b;
  b.status_path_ = (fs::path(work_dir) / "broker.status").string();
  const std::string port_file = (fs::path(work_dir) / "broker.port").string();
  std::error_code ec;
  fs::remove(port_file, ec);
  std::vector<std::string> argv{exe,         "broker",          "--listen", "127.0.0.1:" + std::to_string(port),
                                "--status",  b.status_path_,    "--port-file", port_file};
  if (!config_path.empty()) {
    argv.push_back("--config");
    argv.push_back(config_path);
  }
  b.process_ = ChildProcess::spawn(argv, (fs::path(work_dir) / "broker.out").string());

  const auto deadline = std::chrono::steady_clock::now() + 10s;
  while (std::chrono::steady_clock::now() < deadline) {
    std::ifstream in(port_file);
    unsigned p = 0;
    if (in >> p && p != 0) {
      b.port_ = static_cast<std::uint16_t>(p);
      return b;
    }
    if (b.process_.try_wait()) break;
    std::this_thread::sleep_for(5ms);
  }
  throw Error(Errc::HarnessFault, "broker failed to start (see " + work_dir + "/broker.out)");
}

namespace {

std::optional<nlohmann::json> session_line(const net::Endpoint& ep, const std::string& node) {
  std::istringstream lines(client::query_stats(ep, 1000ms));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (j.value("type", "") == "session" && j.value("node_id", "") == node) return j;
  }
  return std::nullopt;
}

}  // namespace

bool wait_for_subscriptions(const net::Endpoint& ep, const std::string& node, std::size_t subscriptions,
                            std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    try {
      auto s = session_line(ep, node);
      if (s && s->at("subscriptions").size() >= subscriptions) return true;
    } catch (const Error&) {
    }
    std::this_thread::sleep_for(10ms);
  }
  return false;
}

std::vector<std::string> subscribed_channels(const net::Endpoint& ep, const std::string& node) {
  std::vector<std::string> out;
  auto s = session_line(ep, node);
  if (!s) return out;
  for (const auto& sub : s->at("subscriptions")) out.push_back(sub.at("channel").get<std::string>());
  return out;
}

int run_publisher(const PublisherOptions& o, const std::atomic<bool>& stop) {
  if (!(o.rate > 0.0) || !(o.duration_s > 0.0)) throw Error(Errc::UsageError, "rate and duration must be positive");
  client::ClientOptions copts;
  copts.endpoint = o.endpoint;
  copts.node_id = o.node_id;
  client::Client bus(copts);
  if (!bus.wait_registered(10s)) throw Error(Errc::HarnessFault, "publisher could not register");

  wire::TopicAddress topic{o.channel, wire::Region::local(), std::nullopt, 3};
  const wire::Bytes payload(o.payload, 0x5A);
  const auto interval = static_cast<std::uint64_t>(1e9 / o.rate);
  const std::uint64_t start = monotonic_ns();
  const std::uint64_t end = start + static_cast<std::uint64_t>(o.duration_s * 1e9);
  std::uint64_t next = start;
  std::uint64_t sent = 0, dropped = 0;
  while (!stop.load(std::memory_order_relaxed)) {
    const std::uint64_t now = monotonic_ns();
    if (now >= end) break;
    if (next > now) {
      sleep_until_ns(next);
      continue;
    }
    if (bus.publish(topic, payload) == client::PublishResult::DroppedLocal) ++dropped;
    ++sent;
    next += interval ? interval : 1;
  }
  const std::uint64_t finished = monotonic_ns();
  bus.wait_drained(3s);

  if (!o.result_path.empty()) {
    std::ofstream out(o.result_path);
    out << nlohmann::json{{"start_ns", start}, {"end_ns", finished}, {"sent", sent}, {"dropped_local", dropped}}.dump()
        << "\n";
  }
  bus.stop();
  return 0;
}

int run_subscriber(const SubscriberOptions& o, const std::atomic<bool>& stop) {
  std::vector<TimedSample> samples;
  samples.reserve(o.reserve);
  client::ClientOptions copts;
  copts.endpoint = o.endpoint;
  copts.node_id = o.node_id;
  client::Client bus(copts);
  wire::Subscription sub;
  sub.channel_pattern = o.channel;
  bus.subscribe(sub, [&samples](const wire::MessageEnvelope& e) {
    samples.push_back({e.ts_monotonic_ns, monotonic_ns()});
  });
  while (!stop.load(std::memory_order_relaxed)) std::this_thread::sleep_for(10ms);
  bus.stop();

  std::ofstream out(o.samples_path, std::ios::binary | std::ios::trunc);
  wire::Bytes buf;
  buf.reserve(samples.size() * 16);
  wire::ByteWriter w(buf);
  for (const auto& s : samples) {
    w.u64(s.send_ns);
    w.u64(s.recv_ns);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  return out ? 0 : 3;
}

std::vector<TimedSample> load_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::HarnessFault, "missing samples file " + path);
  const wire::Bytes buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  wire::ByteReader r(buf);
  std::vector<TimedSample> out;
  TimedSample s{};
  while (r.u64(s.send_ns) && r.u64(s.recv_ns)) out.push_back(s);
  return out;
}

}  // namespace anchor::bench
