// Fake session sink and an independent reference model of routing and
// queueing, shared by the broker unit tests and the acceptance binary.
#pragma once

#include <algorithm>
#include <array>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "anchor/broker/broker_core.hpp"
#include "generators.hpp"

namespace anchor::testing {

class FakeSink : public broker::SessionSink {
 public:
  bool can_send(broker::ConnId conn) override { return !blocked.count(conn); }
  void send(broker::ConnId conn, wire::Bytes&& frame) override {
    auto r = wire::decode_frame(frame);
    frames[conn].push_back(std::move(*r.frame));
  }
  void close(broker::ConnId conn) override { closed.insert(conn); }

  /// Every envelope delivered to conn, in order, across Data and Batch frames.
  std::vector<wire::MessageEnvelope> envelopes(broker::ConnId conn) const {
    std::vector<wire::MessageEnvelope> out;
    auto it = frames.find(conn);
    if (it == frames.end()) return out;
    for (const auto& f : it->second) {
      if (auto* d = std::get_if<wire::DataFrame>(&f)) out.push_back(d->envelope);
      if (auto* b = std::get_if<wire::BatchFrame>(&f)) out.insert(out.end(), b->envelopes.begin(), b->envelopes.end());
    }
    return out;
  }
  std::vector<wire::AckFrame> acks(broker::ConnId conn) const {
    std::vector<wire::AckFrame> out;
    auto it = frames.find(conn);
    if (it == frames.end()) return out;
    for (const auto& f : it->second) {
      if (auto* a = std::get_if<wire::AckFrame>(&f)) out.push_back(*a);
    }
    return out;
  }
  void clear() { frames.clear(); }

  std::map<broker::ConnId, std::vector<wire::Frame>> frames;
  std::set<broker::ConnId> closed;
  std::set<broker::ConnId> blocked;
};

inline bool model_region_match(const wire::RegionFilter& f, const wire::Region& r) {
  using K = wire::RegionFilter::Kind;
  if (f.kind == K::Any) return true;
  if (f.kind == K::Local) return r.kind == wire::Region::Kind::Local;
  if (f.kind == K::Global) return r.kind == wire::Region::Kind::Global;
  return r.kind == wire::Region::Kind::Named && r.name == f.name;
}

/// Straight-line restatement of the delivery rules over a flat list.
class ModelBroker {
 public:
  explicit ModelBroker(std::size_t capacity) : capacity_(capacity) {}

  void register_node(const std::string& node) {
    drop_node(node);
    nodes_.insert(node);
  }
  void drop_node(const std::string& node) {
    nodes_.erase(node);
    subs_.erase(node);
    queues_.erase(node);
  }
  bool registered(const std::string& node) const { return nodes_.count(node) > 0; }
  void subscribe(const std::string& node, const wire::Subscription& s) {
    auto& list = subs_[node];
    list.erase(std::remove_if(list.begin(), list.end(), [&](const auto& x) { return x.id == s.id; }), list.end());
    list.push_back(s);
  }
  void unsubscribe(const std::string& node, wire::SubscriptionId id) {
    auto& list = subs_[node];
    list.erase(std::remove_if(list.begin(), list.end(), [&](const auto& x) { return x.id == id; }), list.end());
  }

  std::vector<std::string> route(const wire::MessageEnvelope& e, const std::string& origin) const {
    std::vector<std::string> out;
    for (const auto& node : nodes_) {
      auto it = subs_.find(node);
      if (it == subs_.end()) continue;
      bool hit = false;
      for (const auto& s : it->second) {
        const bool channel = s.channel_pattern == "*" || s.channel_pattern == e.topic.channel;
        const bool region = model_region_match(s.region, e.topic.region);
        const bool directed = e.topic.node_id ? *e.topic.node_id == node : s.directed == wire::DirectedMode::Any;
        const bool self = node != origin || s.allow_self;
        if (channel && region && directed && self) hit = true;
      }
      if (hit) out.push_back(node);
    }
    return out;
  }

  void publish(const wire::MessageEnvelope& e, const std::string& origin) {
    for (const auto& d : route(e, origin)) {
      auto& q = queues_[d][e.topic.prio];
      if (q.size() == capacity_) q.pop_front();
      q.push_back(e);
    }
  }

  /// Highest priority first, FIFO within a priority.
  std::vector<wire::MessageEnvelope> drain(const std::string& node) {
    std::vector<wire::MessageEnvelope> out;
    auto it = queues_.find(node);
    if (it == queues_.end()) return out;
    for (int p = 7; p >= 0; --p) {
      auto& q = it->second[static_cast<std::size_t>(p)];
      out.insert(out.end(), q.begin(), q.end());
      q.clear();
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::set<std::string> nodes_;
  std::map<std::string, std::vector<wire::Subscription>> subs_;
  std::map<std::string, std::array<std::deque<wire::MessageEnvelope>, 8>> queues_;
};

struct PropertyOutcome {
  std::size_t operations = 0;
  std::size_t publishes = 0;
  std::size_t deliveries = 0;
  std::vector<std::string> failures;
};

/// Random register/subscribe/unsubscribe/publish/disconnect/expire/flush sequences run
/// against BrokerCore and the model; every route and every flushed sequence
/// must agree, and the routing indices must stay consistent.
inline PropertyOutcome run_routing_property(std::uint64_t seed, std::size_t operations) {
  PropertyOutcome out;
  Gen g(seed);
  broker::BrokerConfig cfg;
  cfg.queue_capacity = 1 + g.below(6);
  cfg.batch_bytes_threshold = 1u << 30;
  FakeSink sink;
  broker::BrokerCore core(cfg, sink);
  ModelBroker model(cfg.queue_capacity);

  const std::vector<std::string> pool{"n0", "n1", "n2", "n3", "n4", "n5"};
  const std::vector<std::string> channels{"a", "b", "c"};
  const std::vector<std::string> names{"east", "west"};
  std::map<std::string, broker::ConnId> conn_of;
  broker::ConnId next_conn = 1;
  std::uint64_t now = 1'000'000;

  auto fail = [&](const std::string& what) {
    if (out.failures.size() < 10) out.failures.push_back("seed " + std::to_string(seed) + ": " + what);
  };
  auto pick_sub = [&] {
    wire::Subscription s;
    s.id = 1 + g.below(4);
    s.channel_pattern = g.below(4) == 0 ? "*" : channels[g.below(channels.size())];
    s.region.kind = static_cast<wire::RegionFilter::Kind>(g.below(4));
    if (s.region.kind == wire::RegionFilter::Kind::Named) s.region.name = names[g.below(2)];
    s.directed = g.below(4) == 0 ? wire::DirectedMode::OnlyDirected : wire::DirectedMode::Any;
    s.allow_self = g.coin();
    return s;
  };
  auto pick_envelope = [&](const std::string& origin) {
    wire::MessageEnvelope e;
    e.topic.channel = channels[g.below(channels.size())];
    switch (g.below(3)) {
      case 0: e.topic.region = wire::Region::local(); break;
      case 1: e.topic.region = wire::Region::global(); break;
      default: e.topic.region = wire::Region::named(names[g.below(2)]);
    }
    if (g.below(3) == 0) e.topic.node_id = pool[g.below(pool.size())];
    e.topic.prio = static_cast<std::uint8_t>(g.below(8));
    e.publisher_id = origin;
    e.seq = ++out.publishes;
    e.payload = g.bytes(16);
    return e;
  };
  auto check_flush = [&] {
    now += cfg.max_residence_ns;
    sink.clear();
    core.flush_batches(now);
    for (const auto& [node, conn] : conn_of) {
      const auto got = sink.envelopes(conn);
      const auto want = model.drain(node);
      out.deliveries += got.size();
      if (got != want) {
        fail("flush to " + node + " delivered " + std::to_string(got.size()) + " messages, model " +
             std::to_string(want.size()));
      }
    }
  };

  for (std::size_t i = 0; i < operations; ++i) {
    ++out.operations;
    now += 1000;
    const std::string node = pool[g.below(pool.size())];
    const std::size_t op = g.below(20);
    if (op < 2) {
      const broker::ConnId c = next_conn++;
      core.on_connect(c, now);
      core.on_frame(c, wire::RegisterFrame{node, wire::kProtocolVersion}, now);
      conn_of[node] = c;
      model.register_node(node);
    } else if (op < 6) {
      if (!model.registered(node)) continue;
      const auto s = pick_sub();
      core.on_frame(conn_of[node], wire::SubscribeFrame{s}, now);
      model.subscribe(node, s);
    } else if (op < 7) {
      if (!model.registered(node)) continue;
      const auto id = 1 + g.below(4);
      core.on_frame(conn_of[node], wire::UnsubscribeFrame{id}, now);
      model.unsubscribe(node, id);
    } else if (op < 8) {
      if (!model.registered(node)) continue;
      core.on_disconnect(conn_of[node]);
      conn_of.erase(node);
      model.drop_node(node);
    } else if (op < 9) {
      // Expire one node: everyone else heartbeats just before the deadline.
      if (!model.registered(node)) continue;
      const std::uint64_t t = now + cfg.heartbeat_timeout_ns;
      for (const auto& [other, conn] : conn_of) {
        if (other != node) core.on_frame(conn, wire::HeartbeatFrame{other, t}, t);
      }
      now = t + 1;
      const auto expired = core.check_liveness(now);
      if (expired != std::vector<std::string>{node}) fail("expiry of " + node + " removed " + std::to_string(expired.size()) + " sessions");
      conn_of.erase(node);
      model.drop_node(node);
    } else if (op < 18) {
      if (!model.registered(node)) continue;
      const auto e = pick_envelope(node);
      const auto got = core.route(e, node);
      const auto want = model.route(e, node);
      if (got != want) fail("route of " + wire::format_topic(e.topic) + " from " + node + " differs");
      core.on_frame(conn_of[node], wire::DataFrame{e}, now);
      model.publish(e, node);
    } else {
      check_flush();
    }
    if (!core.routing().audit()) fail("routing indices inconsistent after operation " + std::to_string(i));
    for (const auto& [n, conn] : conn_of) {
      const auto* s = core.session(n);
      if (!s) {
        fail("session " + n + " missing");
        continue;
      }
      for (const auto& q : s->queues) {
        if (q.size() > cfg.queue_capacity) fail("queue of " + n + " above capacity");
      }
    }
  }
  check_flush();
  return out;
}

}  // namespace anchor::testing
