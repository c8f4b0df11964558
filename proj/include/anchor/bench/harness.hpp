#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "anchor/net/socket.hpp"
#include "anchor/process.hpp"

namespace anchor::bench {

/// A broker run as a child of exe (an anchorctl binary).
class BrokerChild {
 public:
  /// port 0 lets the broker pick one. Throws Error(HarnessFault).
  static BrokerChild start(const std::string& exe, const std::string& work_dir, std::uint16_t port = 0,
                           const std::string& config_path = {});

  net::Endpoint endpoint() const { return {"127.0.0.1", port_}; }
  std::uint16_t port() const noexcept { return port_; }
  const std::string& status_path() const noexcept { return status_path_; }
  ChildProcess& process() noexcept { return process_; }

 private:
  ChildProcess process_;
  std::uint16_t port_ = 0;
  std::string status_path_;
};

/// Polls broker stats until node has at least `subscriptions` subscriptions.
bool wait_for_subscriptions(const net::Endpoint& ep, const std::string& node, std::size_t subscriptions,
                            std::chrono::milliseconds timeout);

/// Subscription channels of node as reported by broker stats; empty when the
/// node has no session.
std::vector<std::string> subscribed_channels(const net::Endpoint& ep, const std::string& node);

// ---- child process bodies behind hidden anchorctl subcommands ----

struct PublisherOptions {
  net::Endpoint endpoint;
  std::string node_id = "bench-pub";
  std::string channel = "bench";
  std::size_t payload = 128;
  double rate = 1000.0;
  double duration_s = 30.0;
  std::string result_path;  // JSON {start_ns, end_ns, sent, dropped_local}
};

/// Open-loop paced publisher: send i is due at start + i/rate. After a stall
/// it sends back to back until it is on schedule again.
int run_publisher(const PublisherOptions& o, const std::atomic<bool>& stop);

struct SubscriberOptions {
  net::Endpoint endpoint;
  std::string node_id = "bench-sub";
  std::string channel = "bench";
  std::size_t reserve = 1u << 20;
  std::string samples_path;  // binary little-endian u64 pairs (send_ns, recv_ns)
};

/// Records (send timestamp, receive timestamp) per message until stop.
int run_subscriber(const SubscriberOptions& o, const std::atomic<bool>& stop);

struct TimedSample {
  std::uint64_t send_ns;
  std::uint64_t recv_ns;
};
std::vector<TimedSample> load_samples(const std::string& path);

}  // namespace anchor::bench
