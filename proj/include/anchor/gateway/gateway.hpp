#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "anchor/client/client.hpp"
#include "anchor/config.hpp"
#include "anchor/gateway/forward_filter.hpp"

namespace anchor::gateway {

struct ClusterSpec {
  std::string name;
  net::Endpoint endpoint;
};

struct LinkSpec {
  std::string source;
  std::string target;
};

struct GatewayConfig {
  std::string gateway_id = "gateway";
  std::vector<ClusterSpec> clusters;
  std::vector<LinkSpec> links;
  /// Channel patterns picked up in every source cluster.
  std::vector<std::string> channels{"*"};
  std::size_t dedupe_window = 65536;
  std::uint8_t max_hops = 4;
  std::size_t queue_capacity = 4096;
  client::ClientOptions client_template;

  /// Sections [gateway], [cluster.NAME] (endpoint) and [link.NAME]
  /// (source, target). Throws Error(ConfigError).
  static GatewayConfig from(const Config& cfg);
  void validate() const;
};

struct GatewayStats {
  std::uint64_t observed = 0;
  std::uint64_t forwarded = 0;
  std::uint64_t local_scope = 0;
  std::uint64_t hop_limit = 0;
  std::uint64_t not_target = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t dropped_target = 0;  // evicted from a target client's send queue
};

/// One bus client per cluster plus the forwarding filter. A message delivered
/// to the gateway in cluster S is offered to every link S->T; a forwarded
/// copy is offered in turn to the links leaving T.
class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  ~Gateway();

  bool wait_ready(std::chrono::milliseconds timeout) const;
  GatewayStats stats() const;
  void stop();

 private:
  void handle(const wire::MessageEnvelope& e, const std::string& source);

  GatewayConfig config_;
  ForwardFilter filter_;
  std::map<std::string, std::unique_ptr<client::Client>> clients_;
  std::map<std::string, std::vector<std::string>> targets_;  // source -> targets

  std::atomic<std::uint64_t> observed_{0}, forwarded_{0}, local_{0}, hops_{0}, not_target_{0}, dup_{0}, dropped_{0};
};

}  // namespace anchor::gateway
