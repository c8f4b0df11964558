#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "anchor/client/recovery.hpp"
#include "anchor/config.hpp"
#include "anchor/net/socket.hpp"
#include "anchor/wire/frame.hpp"

namespace anchor::client {

struct ClientOptions {
  net::Endpoint endpoint;
  std::string node_id;
  std::size_t send_queue_capacity = 8192;
  BackoffPolicy backoff;
  std::uint64_t heartbeat_interval_ns = 500'000'000;
  std::uint64_t heartbeat_timeout_ns = 1'500'000'000;
  /// 0 means 2 x heartbeat_timeout.
  std::uint64_t silence_timeout_ns = 0;
  std::uint64_t rng_seed = 0;  // 0 seeds from std::random_device
  wire::Limits limits;

  /// Reads a config section (endpoint, node_id, capacities, backoff_*,
  /// heartbeat_*), then applies ANCHOR_ENDPOINT and ANCHOR_NODE_ID.
  static ClientOptions from(const Config& cfg, const std::string& section);
  /// Applies ANCHOR_ENDPOINT and ANCHOR_NODE_ID when set.
  void apply_environment();
  std::uint64_t silence_ns() const noexcept {
    return silence_timeout_ns ? silence_timeout_ns : 2 * heartbeat_timeout_ns;
  }
};

enum class PublishResult {
  Accepted,
  DroppedLocal,  // accepted, but the send queue was full and its oldest entry was dropped
};

using Handler = std::function<void(const wire::MessageEnvelope&)>;

struct ClientStats {
  std::uint64_t published = 0;
  std::uint64_t dropped_local = 0;
  std::uint64_t sent = 0;
  std::uint64_t requeued = 0;
  std::uint64_t received = 0;
  std::uint64_t dispatched = 0;
  std::uint64_t connect_attempts = 0;
  std::uint64_t registrations = 0;
  std::size_t queued = 0;
};

/// Node-side bus client. An I/O thread owns the connection and the recovery
/// machine; a dispatch thread runs handlers sequentially in arrival order.
/// publish/subscribe/unsubscribe may be called from any thread.
class Client {
 public:
  /// Starts both threads; the first connection attempt is immediate.
  explicit Client(ClientOptions options);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  const std::string& node_id() const noexcept { return options_.node_id; }

  /// Stamps seq and timestamp and queues the envelope. Never blocks on the
  /// network. The assigned seq is stored in *seq_out when given.
  /// Throws Error(PayloadTooLarge | MalformedTopic).
  PublishResult publish(const wire::TopicAddress& topic, wire::Bytes payload, std::uint64_t* seq_out = nullptr);
  /// Queues an envelope as is (publisher, seq, timestamp and hop kept).
  PublishResult forward(wire::MessageEnvelope envelope);

  /// sub.id is assigned here. Throws Error(PatternInvalid).
  wire::SubscriptionId subscribe(wire::Subscription sub, Handler handler);
  void unsubscribe(wire::SubscriptionId id);
  std::vector<wire::Subscription> desired_subscriptions() const;

  ConnState state() const noexcept { return state_.load(std::memory_order_acquire); }
  bool wait_registered(std::chrono::milliseconds timeout) const;
  /// Waits until every queued envelope has been written to a socket.
  bool wait_drained(std::chrono::milliseconds timeout) const;
  ClientStats stats() const;
  /// Monotonic instants of every connection attempt.
  std::vector<std::uint64_t> connect_attempts() const;

  /// Stops both threads; queued messages are flushed at best effort.
  void stop();

 private:
  struct Control {
    enum class Kind { Subscribe, Unsubscribe } kind;
    wire::Subscription sub;
  };
  struct Registered {
    wire::Subscription sub;
    Handler handler;
  };

  PublishResult enqueue(wire::MessageEnvelope e);
  void io_loop();
  void dispatch_loop();
  void apply(Transition t);
  void fault(RecoveryEvent e, const char* why);
  void on_frame(wire::Frame& f);
  void pump_sends();
  void send_registration();
  void handle_connected();
  bool matches(const wire::Subscription& s, const wire::MessageEnvelope& e) const;

  ClientOptions options_;
  RecoveryMachine machine_;
  std::atomic<ConnState> state_{ConnState::Disconnected};
  std::atomic<bool> stop_{false};
  net::Waker waker_;

  mutable std::mutex mu_;
  mutable std::condition_variable state_cv_;
  std::deque<wire::MessageEnvelope> send_queue_;
  std::deque<Control> control_;
  std::map<wire::SubscriptionId, Registered> subs_;
  wire::SubscriptionId next_sub_id_ = 1;
  std::uint64_t next_seq_ = 1;
  ClientStats stats_;
  std::vector<std::uint64_t> attempts_;
  bool inflight_empty_ = true;

  std::mutex dispatch_mu_;
  std::condition_variable dispatch_cv_;
  std::deque<wire::MessageEnvelope> inbox_;

  // I/O thread only.
  std::unique_ptr<net::StreamConn> conn_;
  bool connect_pending_ = false;
  bool registration_sent_ = false;
  std::deque<std::pair<std::uint64_t, wire::MessageEnvelope>> inflight_;  // end offset, envelope
  std::uint64_t backoff_until_ = 0;
  std::uint64_t attempt_deadline_ = 0;
  std::uint64_t last_rx_ = 0;
  std::uint64_t last_echo_ = 0;
  std::uint64_t next_heartbeat_ = 0;

  std::thread io_thread_;
  std::thread dispatch_thread_;
};

/// One-shot StatsRequest over a fresh connection. Throws Error(IoFailure).
std::string query_stats(const net::Endpoint& endpoint, std::chrono::milliseconds timeout);

}  // namespace anchor::client
