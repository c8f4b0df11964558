#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "anchor/broker/routing_table.hpp"
#include "anchor/config.hpp"
#include "anchor/wire/frame.hpp"

namespace anchor::broker {

using ConnId = std::uint64_t;
constexpr std::size_t kPriorities = 8;

struct BrokerConfig {
  std::string broker_id = "master";
  std::size_t queue_capacity = 4096;
  std::uint64_t max_residence_ns = 1'000'000;
  std::uint64_t tick_ns = 250'000;
  std::size_t batch_bytes_threshold = 64 * 1024;
  std::uint64_t heartbeat_interval_ns = 500'000'000;
  std::uint64_t heartbeat_timeout_ns = 1'500'000'000;
  /// Per-connection unsent bytes above which flushing pauses.
  std::size_t send_buffer_limit = 8u << 20;
  wire::Limits limits;

  /// Reads section [broker]. Throws Error(ConfigError).
  static BrokerConfig from(const Config& cfg);
  void validate() const;
};

/// Where the core puts bytes. Implemented by the socket server and by tests.
class SessionSink {
 public:
  virtual ~SessionSink() = default;
  /// False while the connection's send buffer is over its limit.
  virtual bool can_send(ConnId conn) = 0;
  virtual void send(ConnId conn, wire::Bytes&& frame) = 0;
  virtual void close(ConnId conn) = 0;
};

struct SessionStats {
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t batches = 0;
  std::uint64_t frames = 0;
  std::uint64_t backpressure = 0;
};

struct BrokerStats {
  std::uint64_t received = 0;
  std::uint64_t routed = 0;
  std::uint64_t unroutable = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t discarded = 0;  // queued when a session ended
  std::uint64_t expired = 0;
  std::uint64_t evicted = 0;
  std::uint64_t unregistered_data = 0;
};

/// One message leaving a session queue; fed to the dispatch observer.
struct DispatchRecord {
  std::string node_id;
  std::string publisher_id;
  std::string channel;
  std::uint8_t prio = 0;
  std::uint64_t seq = 0;
  std::uint64_t enqueue_ns = 0;
  std::uint64_t send_ns = 0;
};

enum class EnqueueResult { Enqueued, EnqueuedDroppedOldest, NoSession };

/// Routing, queueing, batching and liveness for one cluster. Single-threaded;
/// all time comes in through the `now` arguments.
class BrokerCore {
 public:
  struct Routed {
    wire::MessageEnvelope envelope;
    wire::Bytes encoded;
  };
  struct Queued {
    std::shared_ptr<const Routed> message;
    std::uint64_t enqueue_ns;
  };
  struct Session {
    std::string node_id;
    ConnId conn = 0;
    std::array<std::deque<Queued>, kPriorities> queues;
    std::size_t queued_bytes = 0;
    std::size_t queued_count = 0;
    SessionStats stats;
    std::optional<std::uint64_t> oldest_enqueue_ns() const;
  };

  BrokerCore(BrokerConfig config, SessionSink& sink);

  const BrokerConfig& config() const noexcept { return config_; }

  void on_connect(ConnId conn, std::uint64_t now);
  /// Handles one decoded frame, replying through the sink.
  void on_frame(ConnId conn, const wire::Frame& frame, std::uint64_t now);
  void on_disconnect(ConnId conn);

  /// Throws Error(VersionMismatch) or Error(MalformedTopic) for a bad identity.
  Session& register_node(ConnId conn, const std::string& identity, std::uint16_t version, std::uint64_t now);
  /// Throws Error(PatternInvalid) or Error(NotRegistered).
  wire::SubscriptionId handle_subscribe(const std::string& node_id, const wire::Subscription& sub);
  bool handle_unsubscribe(const std::string& node_id, wire::SubscriptionId id);

  /// Sorted, duplicate-free destination list for an envelope published by origin.
  std::vector<std::string> route(const wire::MessageEnvelope& e, const std::string& origin) const;
  EnqueueResult enqueue(const std::string& node_id, std::shared_ptr<const Routed> message, std::uint64_t now);
  /// route + enqueue to every destination. Returns the destination count.
  std::size_t publish(const std::string& origin, const wire::MessageEnvelope& e, std::uint64_t now);

  /// Sends due batches. Returns frames handed to the sink.
  std::size_t flush_batches(std::uint64_t now);
  /// Closes sessions and pending connections past their deadline.
  std::vector<std::string> check_liveness(std::uint64_t now);

  const Session* session(const std::string& node_id) const;
  std::size_t session_count() const noexcept { return sessions_.size(); }
  bool has_queued() const noexcept { return total_queued_ > 0; }
  /// Earliest instant at which flush_batches would send by residence.
  std::optional<std::uint64_t> next_flush_deadline() const;
  const RoutingTable& routing() const noexcept { return routing_; }
  const BrokerStats& stats() const noexcept { return stats_; }
  /// JSON lines: one broker line, then one line per session.
  std::string stats_json() const;

  void set_dispatch_observer(std::function<void(const DispatchRecord&)> observer) { observer_ = std::move(observer); }

 private:
  struct ConnState {
    std::optional<std::string> node_id;
    std::uint64_t deadline = 0;
  };

  void reply(ConnId conn, const wire::Frame& f);
  void end_session(std::map<std::string, Session>::iterator it, bool close_conn);
  std::size_t flush_session(Session& s, std::uint64_t now);

  BrokerConfig config_;
  SessionSink& sink_;
  RoutingTable routing_;
  std::map<std::string, Session> sessions_;
  std::map<ConnId, ConnState> conns_;
  BrokerStats stats_;
  std::size_t total_queued_ = 0;
  std::function<void(const DispatchRecord&)> observer_;
};

}  // namespace anchor::broker
