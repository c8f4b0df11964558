#include "anchor/client/client.hpp"

#include <poll.h>

#include <algorithm>
#include <cstdlib>
#include <memory>
#include <random>

#include <spdlog/spdlog.h>

#include "anchor/clock.hpp"
#include "anchor/error.hpp"

namespace anchor::client {

namespace {

constexpr std::size_t kMaxPendingOut = 1u << 20;
constexpr std::size_t kMaxBatchBytes = 64 * 1024;
constexpr std::uint64_t kMaxPollNs = 50 * kNsPerMs;

std::uint64_t seed_or_random(std::uint64_t seed) {
  if (seed != 0) return seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace

ClientOptions ClientOptions::from(const Config& cfg, const std::string& section) {
  ClientOptions o;
  o.endpoint = net::Endpoint::parse(cfg.get_string(section, "endpoint", "127.0.0.1:7400"));
  o.node_id = cfg.get_string(section, "node_id", "");
  o.send_queue_capacity = static_cast<std::size_t>(cfg.get_int(section, "send_queue_capacity", 8192));
  o.backoff.base_ns = static_cast<std::uint64_t>(cfg.get_int(section, "backoff_base_ms", 100)) * kNsPerMs;
  o.backoff.cap_ns = static_cast<std::uint64_t>(cfg.get_int(section, "backoff_cap_ms", 5000)) * kNsPerMs;
  o.backoff.factor = cfg.get_double(section, "backoff_factor", 2.0);
  o.backoff.jitter = cfg.get_double(section, "backoff_jitter", 0.2);
  o.heartbeat_interval_ns = static_cast<std::uint64_t>(cfg.get_int(section, "heartbeat_interval_ms", 500)) * kNsPerMs;
  o.heartbeat_timeout_ns = static_cast<std::uint64_t>(cfg.get_int(section, "heartbeat_timeout_ms", 1500)) * kNsPerMs;
  o.rng_seed = static_cast<std::uint64_t>(cfg.get_int(section, "seed", 0));
  o.apply_environment();
  return o;
}

void ClientOptions::apply_environment() {
  if (const char* ep = std::getenv("ANCHOR_ENDPOINT"); ep && *ep) endpoint = net::Endpoint::parse(ep);
  if (const char* id = std::getenv("ANCHOR_NODE_ID"); id && *id) node_id = id;
}

Client::Client(ClientOptions options)
    : options_(std::move(options)), machine_(options_.backoff, seed_or_random(options_.rng_seed)) {
  if (!wire::is_valid_token(options_.node_id)) throw Error(Errc::ConfigError, "node id '" + options_.node_id + "'");
  if (options_.send_queue_capacity == 0) throw Error(Errc::ConfigError, "send queue capacity must be positive");
  io_thread_ = std::thread([this] { io_loop(); });
  dispatch_thread_ = std::thread([this] { dispatch_loop(); });
}

Client::~Client() { stop(); }

void Client::stop() {
  if (stop_.exchange(true)) {
    if (io_thread_.joinable()) io_thread_.join();
    if (dispatch_thread_.joinable()) dispatch_thread_.join();
    return;
  }
  waker_.wake();
  if (io_thread_.joinable()) io_thread_.join();
  dispatch_cv_.notify_all();
  if (dispatch_thread_.joinable()) dispatch_thread_.join();
}

PublishResult Client::publish(const wire::TopicAddress& topic, wire::Bytes payload, std::uint64_t* seq_out) {
  if (!wire::is_valid_topic(topic)) throw Error(Errc::MalformedTopic, "invalid topic");
  if (payload.size() > options_.limits.max_payload) {
    throw Error(Errc::PayloadTooLarge, std::to_string(payload.size()) + " bytes");
  }
  wire::MessageEnvelope e;
  e.topic = topic;
  e.publisher_id = options_.node_id;
  e.payload = std::move(payload);
  PublishResult r;
  {
    std::lock_guard lock(mu_);
    e.seq = next_seq_++;
    if (seq_out) *seq_out = e.seq;
    e.ts_monotonic_ns = monotonic_ns();
    r = enqueue(std::move(e));
  }
  waker_.wake();
  return r;
}

PublishResult Client::forward(wire::MessageEnvelope envelope) {
  if (!wire::is_valid_topic(envelope.topic)) throw Error(Errc::MalformedTopic, "invalid topic");
  if (envelope.payload.size() > options_.limits.max_payload) throw Error(Errc::PayloadTooLarge, "forwarded payload");
  PublishResult r;
  {
    std::lock_guard lock(mu_);
    r = enqueue(std::move(envelope));
  }
  waker_.wake();
  return r;
}

PublishResult Client::enqueue(wire::MessageEnvelope e) {
  ++stats_.published;
  send_queue_.push_back(std::move(e));
  if (send_queue_.size() > options_.send_queue_capacity) {
    send_queue_.pop_front();
    ++stats_.dropped_local;
    return PublishResult::DroppedLocal;
  }
  return PublishResult::Accepted;
}

wire::SubscriptionId Client::subscribe(wire::Subscription sub, Handler handler) {
  wire::validate_subscription(sub);
  {
    std::lock_guard lock(mu_);
    sub.id = next_sub_id_++;
    subs_[sub.id] = Registered{sub, std::move(handler)};
    control_.push_back({Control::Kind::Subscribe, sub});
  }
  waker_.wake();
  return sub.id;
}

void Client::unsubscribe(wire::SubscriptionId id) {
  {
    std::lock_guard lock(mu_);
    auto it = subs_.find(id);
    if (it == subs_.end()) return;
    control_.push_back({Control::Kind::Unsubscribe, it->second.sub});
    subs_.erase(it);
  }
  waker_.wake();
}

std::vector<wire::Subscription> Client::desired_subscriptions() const {
  std::lock_guard lock(mu_);
  std::vector<wire::Subscription> out;
  for (const auto& [id, r] : subs_) out.push_back(r.sub);
  return out;
}

bool Client::wait_registered(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return state_cv_.wait_for(lock, timeout, [this] { return state() == ConnState::Registered; });
}

bool Client::wait_drained(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return state_cv_.wait_for(lock, timeout, [this] { return send_queue_.empty() && inflight_empty_; });
}

ClientStats Client::stats() const {
  std::lock_guard lock(mu_);
  ClientStats s = stats_;
  s.queued = send_queue_.size();
  return s;
}

std::vector<std::uint64_t> Client::connect_attempts() const {
  std::lock_guard lock(mu_);
  return attempts_;
}

bool Client::matches(const wire::Subscription& s, const wire::MessageEnvelope& e) const {
  if (s.channel_pattern != "*" && s.channel_pattern != e.topic.channel) return false;
  if (!s.region.matches(e.topic.region)) return false;
  if (e.topic.node_id) {
    if (*e.topic.node_id != options_.node_id) return false;
  } else if (s.directed == wire::DirectedMode::OnlyDirected) {
    return false;
  }
  if (e.publisher_id == options_.node_id && !s.allow_self) return false;
  return true;
}

void Client::apply(Transition t) {
  if (t.from != t.to) {
    {
      std::lock_guard lock(mu_);
      state_.store(t.to, std::memory_order_release);
    }
    state_cv_.notify_all();
    spdlog::debug("client '{}': {} -> {}", options_.node_id, to_string(t.from), to_string(t.to));
  }
  const std::uint64_t now = monotonic_ns();
  switch (t.action) {
    case RecoveryAction::None: break;
    case RecoveryAction::StartConnect: {
      {
        std::lock_guard lock(mu_);
        ++stats_.connect_attempts;
        attempts_.push_back(now);
      }
      attempt_deadline_ = now + options_.heartbeat_timeout_ns;
      try {
        conn_ = std::make_unique<net::StreamConn>(net::start_connect(options_.endpoint), options_.limits);
        connect_pending_ = true;
      } catch (const Error& e) {
        fault(RecoveryEvent::ConnError, e.what());
      }
      break;
    }
    case RecoveryAction::SendRegistration: send_registration(); break;
    case RecoveryAction::CloseConnection: {
      if (conn_) {
        const std::uint64_t written = conn_->bytes_written();
        std::vector<wire::MessageEnvelope> back;
        for (auto& [end, env] : inflight_) {
          if (end > written) back.push_back(std::move(env));
        }
        inflight_.clear();
        conn_.reset();
        std::lock_guard lock(mu_);
        stats_.requeued += back.size();
        send_queue_.insert(send_queue_.begin(), std::make_move_iterator(back.begin()),
                           std::make_move_iterator(back.end()));
        while (send_queue_.size() > options_.send_queue_capacity) {
          send_queue_.pop_front();
          ++stats_.dropped_local;
        }
        inflight_empty_ = true;
      }
      connect_pending_ = false;
      registration_sent_ = false;
      apply(machine_.step(RecoveryEvent::CleanupDone));
      break;
    }
    case RecoveryAction::ScheduleBackoff: backoff_until_ = now + t.delay_ns; break;
  }
}

void Client::fault(RecoveryEvent e, const char* why) {
  const ConnState s = machine_.state();
  if (s != ConnState::Connecting && s != ConnState::Registered) return;
  spdlog::debug("client '{}': {} ({})", options_.node_id, to_string(e), why);
  apply(machine_.step(e));
}

void Client::send_registration() {
  std::vector<wire::Subscription> subs;
  {
    std::lock_guard lock(mu_);
    control_.clear();
    for (const auto& [id, r] : subs_) subs.push_back(r.sub);
  }
  conn_->queue(wire::RegisterFrame{options_.node_id, wire::kProtocolVersion});
  for (const auto& s : subs) conn_->queue(wire::SubscribeFrame{s});
  registration_sent_ = true;
}

void Client::handle_connected() {
  connect_pending_ = false;
  const std::uint64_t now = monotonic_ns();
  last_rx_ = now;
  last_echo_ = now;
  apply(machine_.step(RecoveryEvent::ConnEstablished));
}

void Client::on_frame(wire::Frame& f) {
  const std::uint64_t now = monotonic_ns();
  last_rx_ = now;
  if (auto* ack = std::get_if<wire::AckFrame>(&f)) {
    if (ack->ref_seq == 0) {
      if (ack->status != wire::AckStatus::Ok) {
        fault(RecoveryEvent::ConnError, "registration refused");
        return;
      }
      if (machine_.state() != ConnState::Connecting) return;
      last_echo_ = now;
      next_heartbeat_ = now + options_.heartbeat_interval_ns;
      {
        std::lock_guard lock(mu_);
        ++stats_.registrations;
      }
      apply(machine_.step(RecoveryEvent::RegisterAcked));
    } else if (ack->status != wire::AckStatus::Ok) {
      spdlog::warn("client '{}': subscription {} rejected", options_.node_id, ack->ref_seq);
    }
  } else if (std::holds_alternative<wire::HeartbeatFrame>(f)) {
    last_echo_ = now;
  } else if (auto* d = std::get_if<wire::DataFrame>(&f)) {
    {
      std::lock_guard lock(dispatch_mu_);
      inbox_.push_back(std::move(d->envelope));
    }
    dispatch_cv_.notify_one();
    std::lock_guard lock(mu_);
    ++stats_.received;
  } else if (auto* b = std::get_if<wire::BatchFrame>(&f)) {
    const std::size_t n = b->envelopes.size();
    {
      std::lock_guard lock(dispatch_mu_);
      for (auto& e : b->envelopes) inbox_.push_back(std::move(e));
    }
    dispatch_cv_.notify_one();
    std::lock_guard lock(mu_);
    stats_.received += n;
  }
}

void Client::pump_sends() {
  std::deque<Control> control;
  {
    std::lock_guard lock(mu_);
    control.swap(control_);
  }
  for (const auto& c : control) {
    if (c.kind == Control::Kind::Subscribe) conn_->queue(wire::SubscribeFrame{c.sub});
    else conn_->queue(wire::UnsubscribeFrame{c.sub.id});
  }

  std::vector<wire::MessageEnvelope> batch;
  std::vector<wire::Bytes> encoded;
  while (conn_->pending_bytes() < kMaxPendingOut) {
    batch.clear();
    {
      std::lock_guard lock(mu_);
      std::size_t bytes = 0;
      while (!send_queue_.empty() && bytes < kMaxBatchBytes) {
        bytes += send_queue_.front().payload.size() + 64;
        batch.push_back(std::move(send_queue_.front()));
        send_queue_.pop_front();
      }
      if (!batch.empty()) inflight_empty_ = false;
    }
    if (batch.empty()) break;
    encoded.assign(batch.size(), {});
    std::vector<wire::ByteView> views;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      wire::encode_envelope(batch[i], encoded[i], options_.limits);
      views.emplace_back(encoded[i]);
    }
    conn_->queue_bytes(wire::assemble_envelope_frame(views, options_.limits));
    const std::uint64_t end = conn_->bytes_written() + conn_->pending_bytes();
    for (auto& e : batch) inflight_.emplace_back(end, std::move(e));
    std::lock_guard lock(mu_);
    stats_.sent += batch.size();
  }
}

void Client::io_loop() {
  last_rx_ = last_echo_ = monotonic_ns();
  apply(machine_.step(RecoveryEvent::Start));
  std::vector<pollfd> fds;

  while (!stop_.load(std::memory_order_acquire)) {
    std::uint64_t now = monotonic_ns();
    const ConnState st = machine_.state();

    if (st == ConnState::Registered && conn_) {
      pump_sends();
      if (conn_->flush() == net::IoStatus::Closed) fault(RecoveryEvent::ConnError, "send failed");
    }

    std::uint64_t wait = kMaxPollNs;
    if (st == ConnState::Disconnected) wait = std::min(wait, backoff_until_ > now ? backoff_until_ - now : 0);
    if (st == ConnState::Registered) wait = std::min(wait, next_heartbeat_ > now ? next_heartbeat_ - now : 0);

    fds.clear();
    fds.push_back({waker_.fd(), POLLIN, 0});
    if (conn_) {
      short ev = POLLIN;
      if (connect_pending_ || conn_->want_write()) ev |= POLLOUT;
      fds.push_back({conn_->fd(), ev, 0});
    }
    timespec ts{static_cast<time_t>(wait / kNsPerSec), static_cast<long>(wait % kNsPerSec)};
    const int n = ::ppoll(fds.data(), fds.size(), &ts, nullptr);
    now = monotonic_ns();
    if (n > 0) {
      if (fds[0].revents & POLLIN) waker_.drain();
      if (fds.size() > 1 && conn_) {
        const short re = fds[1].revents;
        if (connect_pending_) {
          if (re & (POLLOUT | POLLERR | POLLHUP)) {
            if (net::connect_error(conn_->fd()) != 0) fault(RecoveryEvent::ConnError, "connect failed");
            else handle_connected();
          }
        } else {
          if (re & POLLOUT) {
            if (conn_->flush() == net::IoStatus::Closed) fault(RecoveryEvent::ConnError, "send failed");
          }
          if (conn_ && (re & (POLLIN | POLLHUP | POLLERR))) {
            std::vector<wire::Frame> frames;
            net::IoStatus status;
            try {
              status = conn_->read_frames(frames);
            } catch (const Error& e) {
              spdlog::warn("client '{}': {}", options_.node_id, e.what());
              status = net::IoStatus::Closed;
            }
            for (auto& f : frames) {
              if (!conn_) break;
              on_frame(f);
            }
            if (conn_ && status == net::IoStatus::Closed) fault(RecoveryEvent::ConnError, "connection closed");
          }
        }
      }
    }

    switch (machine_.state()) {
      case ConnState::Disconnected:
        if (now >= backoff_until_) apply(machine_.step(RecoveryEvent::BackoffElapsed));
        break;
      case ConnState::Connecting:
        if (now > attempt_deadline_) fault(RecoveryEvent::ConnError, "attempt timed out");
        break;
      case ConnState::Registered:
        if (now > last_rx_ + options_.silence_ns()) {
          fault(RecoveryEvent::RxSilence, "no traffic");
        } else if (now > last_echo_ + options_.heartbeat_timeout_ns) {
          fault(RecoveryEvent::HeartbeatAckMissing, "heartbeat not echoed");
        } else if (now >= next_heartbeat_) {
          conn_->queue(wire::HeartbeatFrame{options_.node_id, now});
          next_heartbeat_ = now + options_.heartbeat_interval_ns;
        }
        break;
      case ConnState::Draining: break;
    }

    if (conn_ && !inflight_.empty()) {
      const std::uint64_t written = conn_->bytes_written();
      while (!inflight_.empty() && inflight_.front().first <= written) inflight_.pop_front();
      if (inflight_.empty()) {
        {
          std::lock_guard lock(mu_);
          inflight_empty_ = true;
        }
        state_cv_.notify_all();
      }
    }
  }

  if (conn_ && machine_.state() == ConnState::Registered) {
    pump_sends();
    const std::uint64_t deadline = monotonic_ns() + 200 * kNsPerMs;
    while (conn_->want_write() && monotonic_ns() < deadline) {
      if (conn_->flush() != net::IoStatus::WouldBlock) break;
      pollfd p{conn_->fd(), POLLOUT, 0};
      ::poll(&p, 1, 10);
    }
  }
  conn_.reset();
}

void Client::dispatch_loop() {
  while (true) {
    wire::MessageEnvelope e;
    {
      std::unique_lock lock(dispatch_mu_);
      dispatch_cv_.wait(lock, [this] { return !inbox_.empty() || stop_.load(std::memory_order_acquire); });
      if (inbox_.empty()) return;
      e = std::move(inbox_.front());
      inbox_.pop_front();
    }
    std::vector<Handler> handlers;
    {
      std::lock_guard lock(mu_);
      for (const auto& [id, r] : subs_) {
        if (matches(r.sub, e)) handlers.push_back(r.handler);
      }
    }
    for (auto& h : handlers) {
      try {
        h(e);
      } catch (const std::exception& ex) {
        spdlog::error("client '{}': handler threw: {}", options_.node_id, ex.what());
      }
    }
    std::lock_guard lock(mu_);
    ++stats_.dispatched;
  }
}

std::string query_stats(const net::Endpoint& endpoint, std::chrono::milliseconds timeout) {
  const std::uint64_t deadline = monotonic_ns() + static_cast<std::uint64_t>(timeout.count()) * kNsPerMs;
  auto remaining_ms = [&]() -> int {
    const std::uint64_t now = monotonic_ns();
    return now >= deadline ? 0 : static_cast<int>((deadline - now) / kNsPerMs) + 1;
  };
  net::StreamConn conn(net::start_connect(endpoint), wire::Limits{});
  pollfd p{conn.fd(), POLLOUT, 0};
  if (::poll(&p, 1, remaining_ms()) <= 0 || net::connect_error(conn.fd()) != 0) {
    throw Error(Errc::IoFailure, "cannot connect to " + endpoint.to_string());
  }
  conn.queue(wire::StatsRequestFrame{});
  std::vector<wire::Frame> frames;
  while (true) {
    if (conn.want_write() && conn.flush() == net::IoStatus::Closed) break;
    p = {conn.fd(), static_cast<short>(POLLIN | (conn.want_write() ? POLLOUT : 0)), 0};
    const int ms = remaining_ms();
    if (ms == 0 || ::poll(&p, 1, ms) <= 0) break;
    const auto status = conn.read_frames(frames);
    for (auto& f : frames) {
      if (auto* r = std::get_if<wire::StatsReplyFrame>(&f)) return r->text;
    }
    frames.clear();
    if (status == net::IoStatus::Closed) break;
  }
  throw Error(Errc::IoFailure, "no stats reply from " + endpoint.to_string());
}

}  // namespace anchor::client
