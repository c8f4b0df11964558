#include "anchor/broker/broker_core.hpp"

#include <algorithm>
#include "json.hpp"

#include "anchor/error.hpp"

namespace anchor::broker {

namespace {

const char* region_filter_name(wire::RegionFilter::Kind k) {
  switch (k) {
    case wire::RegionFilter::Kind::Any: return "any";
    case wire::RegionFilter::Kind::Local: return "local";
    case wire::RegionFilter::Kind::Global: return "global";
    case wire::RegionFilter::Kind::Named: return "named";
  }
  return "?";
}

}  // namespace

BrokerConfig BrokerConfig::from(const Config& cfg) {
  BrokerConfig c;
  const std::string s = "broker";
  c.broker_id = cfg.get_string(s, "id", c.broker_id);
  c.queue_capacity = static_cast<std::size_t>(cfg.get_int(s, "queue_capacity", static_cast<std::int64_t>(c.queue_capacity)));
  c.max_residence_ns = static_cast<std::uint64_t>(cfg.get_int(s, "max_residence_us", 1000)) * 1000;
  c.tick_ns = static_cast<std::uint64_t>(cfg.get_int(s, "tick_us", static_cast<std::int64_t>(c.max_residence_ns / 4000))) * 1000;
  c.batch_bytes_threshold = static_cast<std::size_t>(cfg.get_int(s, "batch_bytes", static_cast<std::int64_t>(c.batch_bytes_threshold)));
  c.heartbeat_interval_ns = static_cast<std::uint64_t>(cfg.get_int(s, "heartbeat_interval_ms", 500)) * 1'000'000;
  c.heartbeat_timeout_ns = static_cast<std::uint64_t>(cfg.get_int(s, "heartbeat_timeout_ms", 1500)) * 1'000'000;
  c.send_buffer_limit = static_cast<std::size_t>(cfg.get_int(s, "send_buffer_limit", static_cast<std::int64_t>(c.send_buffer_limit)));
  c.limits.max_payload = static_cast<std::size_t>(cfg.get_int(s, "max_payload", static_cast<std::int64_t>(c.limits.max_payload)));
  c.limits.max_frame = static_cast<std::size_t>(cfg.get_int(s, "max_frame", static_cast<std::int64_t>(c.limits.max_frame)));
  c.validate();
  return c;
}

void BrokerConfig::validate() const {
  if (!wire::is_valid_token(broker_id)) throw Error(Errc::ConfigError, "broker id '" + broker_id + "'");
  if (queue_capacity == 0) throw Error(Errc::ConfigError, "queue_capacity must be positive");
  if (max_residence_ns == 0 || tick_ns == 0) throw Error(Errc::ConfigError, "residence and tick must be positive");
  if (tick_ns * 4 > max_residence_ns) throw Error(Errc::ConfigError, "tick must be at most a quarter of max_residence");
  if (heartbeat_timeout_ns < heartbeat_interval_ns) throw Error(Errc::ConfigError, "heartbeat timeout below interval");
  if (limits.max_payload + 1024 > limits.max_frame) throw Error(Errc::ConfigError, "max_frame too small for max_payload");
}

std::optional<std::uint64_t> BrokerCore::Session::oldest_enqueue_ns() const {
  std::optional<std::uint64_t> oldest;
  for (const auto& q : queues) {
    if (!q.empty() && (!oldest || q.front().enqueue_ns < *oldest)) oldest = q.front().enqueue_ns;
  }
  return oldest;
}

BrokerCore::BrokerCore(BrokerConfig config, SessionSink& sink) : config_(std::move(config)), sink_(sink) {
  config_.validate();
}

void BrokerCore::reply(ConnId conn, const wire::Frame& f) { sink_.send(conn, wire::encode_frame(f, config_.limits)); }

void BrokerCore::on_connect(ConnId conn, std::uint64_t now) {
  conns_[conn] = ConnState{std::nullopt, now + config_.heartbeat_timeout_ns};
}

void BrokerCore::on_frame(ConnId conn, const wire::Frame& frame, std::uint64_t now) {
  auto cit = conns_.find(conn);
  if (cit == conns_.end()) return;
  cit->second.deadline = now + config_.heartbeat_timeout_ns;
  const std::optional<std::string> node = cit->second.node_id;

  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, wire::RegisterFrame>) {
          try {
            register_node(conn, f.identity, f.protocol_version, now);
            reply(conn, wire::AckFrame{0, wire::AckStatus::Ok});
          } catch (const Error& e) {
            reply(conn, wire::AckFrame{0, e.code() == Errc::VersionMismatch ? wire::AckStatus::VersionMismatch
                                                                              : wire::AckStatus::PatternInvalid});
            sink_.close(conn);
            conns_.erase(conn);
          }
        } else if constexpr (std::is_same_v<T, wire::SubscribeFrame>) {
          if (!node) {
            reply(conn, wire::AckFrame{f.subscription.id, wire::AckStatus::NotRegistered});
            return;
          }
          try {
            handle_subscribe(*node, f.subscription);
            reply(conn, wire::AckFrame{f.subscription.id, wire::AckStatus::Ok});
          } catch (const Error&) {
            reply(conn, wire::AckFrame{f.subscription.id, wire::AckStatus::PatternInvalid});
          }
        } else if constexpr (std::is_same_v<T, wire::UnsubscribeFrame>) {
          if (!node) {
            reply(conn, wire::AckFrame{f.subscription_id, wire::AckStatus::NotRegistered});
            return;
          }
          handle_unsubscribe(*node, f.subscription_id);
          reply(conn, wire::AckFrame{f.subscription_id, wire::AckStatus::Ok});
        } else if constexpr (std::is_same_v<T, wire::HeartbeatFrame>) {
          reply(conn, wire::HeartbeatFrame{config_.broker_id, f.ts});
        } else if constexpr (std::is_same_v<T, wire::DataFrame>) {
          if (!node) {
            ++stats_.unregistered_data;
            return;
          }
          publish(*node, f.envelope, now);
        } else if constexpr (std::is_same_v<T, wire::BatchFrame>) {
          if (!node) {
            stats_.unregistered_data += f.envelopes.size();
            return;
          }
          for (const auto& e : f.envelopes) publish(*node, e, now);
        } else if constexpr (std::is_same_v<T, wire::StatsRequestFrame>) {
          reply(conn, wire::StatsReplyFrame{stats_json()});
        }
      },
      frame);
}

void BrokerCore::on_disconnect(ConnId conn) {
  auto cit = conns_.find(conn);
  if (cit == conns_.end()) return;
  if (cit->second.node_id) {
    auto sit = sessions_.find(*cit->second.node_id);
    if (sit != sessions_.end() && sit->second.conn == conn) end_session(sit, false);
  }
  conns_.erase(conn);
}

BrokerCore::Session& BrokerCore::register_node(ConnId conn, const std::string& identity, std::uint16_t version,
                                               std::uint64_t now) {
  if (version != wire::kProtocolVersion) {
    throw Error(Errc::VersionMismatch, "protocol " + std::to_string(version) + ", supported " +
                                           std::to_string(wire::kProtocolVersion));
  }
  if (!wire::is_valid_token(identity)) throw Error(Errc::MalformedTopic, "identity '" + identity + "'");
  auto& cs = conns_[conn];
  cs.deadline = now + config_.heartbeat_timeout_ns;

  auto existing = sessions_.find(identity);
  if (existing != sessions_.end()) {
    if (existing->second.conn == conn) return existing->second;
    ++stats_.evicted;
    const ConnId old = existing->second.conn;
    end_session(existing, true);
    conns_.erase(old);
  }
  if (cs.node_id && *cs.node_id != identity) {
    auto prev = sessions_.find(*cs.node_id);
    if (prev != sessions_.end() && prev->second.conn == conn) end_session(prev, false);
  }
  cs.node_id = identity;
  Session& s = sessions_[identity];
  s.node_id = identity;
  s.conn = conn;
  return s;
}

wire::SubscriptionId BrokerCore::handle_subscribe(const std::string& node_id, const wire::Subscription& sub) {
  if (!sessions_.count(node_id)) throw Error(Errc::NotRegistered, node_id);
  wire::validate_subscription(sub);
  routing_.add(node_id, sub);
  return sub.id;
}

bool BrokerCore::handle_unsubscribe(const std::string& node_id, wire::SubscriptionId id) {
  return routing_.remove(node_id, id);
}

std::vector<std::string> BrokerCore::route(const wire::MessageEnvelope& e, const std::string& origin) const {
  std::vector<std::string> out;
  for (const auto& entry : routing_.candidates(e.topic.channel)) {
    const auto& sub = *entry.subscription;
    if (!sub.region.matches(e.topic.region)) continue;
    if (e.topic.node_id) {
      if (*e.topic.node_id != entry.node_id) continue;
    } else if (sub.directed == wire::DirectedMode::OnlyDirected) {
      continue;
    }
    if (entry.node_id == origin && !sub.allow_self) continue;
    out.push_back(entry.node_id);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

EnqueueResult BrokerCore::enqueue(const std::string& node_id, std::shared_ptr<const Routed> message,
                                  std::uint64_t now) {
  auto it = sessions_.find(node_id);
  if (it == sessions_.end()) return EnqueueResult::NoSession;
  Session& s = it->second;
  auto& q = s.queues[message->envelope.topic.prio & 7];
  EnqueueResult result = EnqueueResult::Enqueued;
  if (q.size() >= config_.queue_capacity) {
    s.queued_bytes -= q.front().message->encoded.size();
    q.pop_front();
    --s.queued_count;
    --total_queued_;
    ++s.stats.dropped;
    ++stats_.dropped;
    result = EnqueueResult::EnqueuedDroppedOldest;
  }
  s.queued_bytes += message->encoded.size();
  q.push_back(Queued{std::move(message), now});
  ++s.queued_count;
  ++total_queued_;
  return result;
}

std::size_t BrokerCore::publish(const std::string& origin, const wire::MessageEnvelope& e, std::uint64_t now) {
  ++stats_.received;
  const auto destinations = route(e, origin);
  if (destinations.empty()) {
    ++stats_.unroutable;
    return 0;
  }
  ++stats_.routed;
  auto routed = std::make_shared<Routed>();
  routed->envelope = e;
  wire::encode_envelope(e, routed->encoded, config_.limits);
  std::shared_ptr<const Routed> shared = std::move(routed);
  for (const auto& d : destinations) enqueue(d, shared, now);
  return destinations.size();
}

std::size_t BrokerCore::flush_session(Session& s, std::uint64_t now) {
  std::size_t frames = 0;
  const std::size_t budget = config_.limits.max_frame - wire::kBatchOverhead;
  while (s.queued_count > 0) {
    if (!sink_.can_send(s.conn)) {
      ++s.stats.backpressure;
      break;
    }
    std::vector<Queued> taken;
    std::size_t bytes = 0;
    for (int p = static_cast<int>(kPriorities) - 1; p >= 0; --p) {
      auto& q = s.queues[static_cast<std::size_t>(p)];
      while (!q.empty()) {
        const std::size_t sz = q.front().message->encoded.size();
        if (!taken.empty() && bytes + sz > budget) break;
        bytes += sz;
        taken.push_back(std::move(q.front()));
        q.pop_front();
      }
      if (!q.empty()) break;
    }
    std::vector<wire::ByteView> views;
    views.reserve(taken.size());
    for (const auto& t : taken) views.emplace_back(t.message->encoded);
    auto frame = wire::assemble_envelope_frame(views, config_.limits);

    s.queued_bytes -= bytes;
    s.queued_count -= taken.size();
    total_queued_ -= taken.size();
    s.stats.delivered += taken.size();
    stats_.delivered += taken.size();
    ++s.stats.frames;
    if (taken.size() > 1) ++s.stats.batches;
    if (observer_) {
      for (const auto& t : taken) {
        const auto& e = t.message->envelope;
        observer_(DispatchRecord{s.node_id, e.publisher_id, e.topic.channel, e.topic.prio, e.seq, t.enqueue_ns, now});
      }
    }
    sink_.send(s.conn, std::move(frame));
    ++frames;
  }
  return frames;
}

std::size_t BrokerCore::flush_batches(std::uint64_t now) {
  if (total_queued_ == 0) return 0;
  std::size_t frames = 0;
  for (auto& [id, s] : sessions_) {
    if (s.queued_count == 0) continue;
    const auto oldest = s.oldest_enqueue_ns();
    const bool by_size = s.queued_bytes >= config_.batch_bytes_threshold;
    const bool by_age = oldest && now >= *oldest && now - *oldest >= config_.max_residence_ns;
    if (by_size || by_age) frames += flush_session(s, now);
  }
  return frames;
}

std::optional<std::uint64_t> BrokerCore::next_flush_deadline() const {
  if (total_queued_ == 0) return std::nullopt;
  std::optional<std::uint64_t> best;
  for (const auto& [id, s] : sessions_) {
    if (s.queued_count == 0) continue;
    if (auto o = s.oldest_enqueue_ns()) {
      const std::uint64_t d = *o + config_.max_residence_ns;
      if (!best || d < *best) best = d;
    }
  }
  return best;
}

void BrokerCore::end_session(std::map<std::string, Session>::iterator it, bool close_conn) {
  Session& s = it->second;
  stats_.discarded += s.queued_count;
  total_queued_ -= s.queued_count;
  routing_.remove_node(s.node_id);
  if (close_conn) sink_.close(s.conn);
  auto cit = conns_.find(s.conn);
  if (cit != conns_.end() && cit->second.node_id == s.node_id) cit->second.node_id.reset();
  sessions_.erase(it);
}

std::vector<std::string> BrokerCore::check_liveness(std::uint64_t now) {
  std::vector<std::string> expired;
  std::vector<ConnId> dead;
  for (const auto& [conn, cs] : conns_) {
    if (cs.deadline < now) dead.push_back(conn);
  }
  for (ConnId conn : dead) {
    auto cit = conns_.find(conn);
    if (cit->second.node_id) {
      auto sit = sessions_.find(*cit->second.node_id);
      if (sit != sessions_.end() && sit->second.conn == conn) {
        expired.push_back(sit->first);
        ++stats_.expired;
        end_session(sit, false);
      }
    }
    sink_.close(conn);
    conns_.erase(conn);
  }
  return expired;
}

const BrokerCore::Session* BrokerCore::session(const std::string& node_id) const {
  auto it = sessions_.find(node_id);
  return it == sessions_.end() ? nullptr : &it->second;
}

std::string BrokerCore::stats_json() const {
  using nlohmann::json;
  std::string out;
  json head = {{"type", "broker"},
               {"broker_id", config_.broker_id},
               {"sessions", sessions_.size()},
               {"connections", conns_.size()},
               {"subscriptions", routing_.size()},
               {"received", stats_.received},
               {"routed", stats_.routed},
               {"unroutable", stats_.unroutable},
               {"delivered", stats_.delivered},
               {"dropped", stats_.dropped},
               {"discarded", stats_.discarded},
               {"expired", stats_.expired},
               {"evicted", stats_.evicted},
               {"queued", total_queued_},
               {"routing_consistent", routing_.audit()}};
  out += head.dump() + "\n";
  for (const auto& [id, s] : sessions_) {
    json subs = json::array();
    for (const auto& sub : routing_.subscriptions_of(id)) {
      subs.push_back({{"id", sub.id},
                      {"channel", sub.channel_pattern},
                      {"region", region_filter_name(sub.region.kind)},
                      {"region_name", sub.region.name},
                      {"directed", sub.directed == wire::DirectedMode::OnlyDirected},
                      {"allow_self", sub.allow_self}});
    }
    json line = {{"type", "session"},
                 {"node_id", id},
                 {"subscriptions", subs},
                 {"queued", s.queued_count},
                 {"queued_bytes", s.queued_bytes},
                 {"delivered", s.stats.delivered},
                 {"dropped", s.stats.dropped},
                 {"batches", s.stats.batches},
                 {"frames", s.stats.frames},
                 {"backpressure", s.stats.backpressure}};
    out += line.dump() + "\n";
  }
  return out;
}

}  // namespace anchor::broker
