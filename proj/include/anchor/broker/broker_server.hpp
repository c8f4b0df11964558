#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include "anchor/broker/broker_core.hpp"
#include "anchor/broker/status_segment.hpp"
#include "anchor/net/socket.hpp"

namespace anchor::broker {

struct ServerOptions {
  net::Endpoint listen;
  /// Status segment file; empty disables it.
  std::string status_path;
  /// Written with the bound port once listening; empty disables it.
  std::string port_file;
};

/// Single-threaded poll reactor around BrokerCore. The loop wakes at most one
/// tick apart while anything is queued, so flushes happen on tick granularity.
class BrokerServer final : private SessionSink {
 public:
  /// Binds immediately. Throws Error(IoFailure | ConfigError).
  BrokerServer(BrokerConfig config, ServerOptions options);
  ~BrokerServer() override;

  std::uint16_t port() const noexcept { return port_; }
  BrokerCore& core() noexcept { return core_; }

  /// Runs until stop(). Closes every connection on exit.
  void run();
  /// Safe from other threads and from signal handlers.
  void stop() noexcept;

 private:
  bool can_send(ConnId conn) override;
  void send(ConnId conn, wire::Bytes&& frame) override;
  void close(ConnId conn) override;

  void accept_pending(std::uint64_t now);
  void service_reads(ConnId id, std::uint64_t now);
  void reap_closed();
  void publish_status(std::uint64_t now);
  int poll_timeout_ns(std::uint64_t now) const;

  BrokerCore core_;
  ServerOptions options_;
  net::Fd listener_;
  std::uint16_t port_ = 0;
  net::Waker waker_;
  std::atomic<bool> stop_{false};
  std::map<ConnId, std::unique_ptr<net::StreamConn>> conns_;
  std::set<ConnId> closing_;
  ConnId next_conn_ = 1;
  std::optional<StatusSegment> status_;
  std::uint64_t started_ns_ = 0;
};

}  // namespace anchor::broker
