#include "doctest.h"
#include "broker_model.hpp"

#include "anchor/broker/status_segment.hpp"
#include "anchor/error.hpp"
#include "support.hpp"

using namespace anchor;
using namespace anchor::broker;
using anchor::testing::FakeSink;

namespace {

constexpr std::uint64_t kMs = 1'000'000;

struct Fixture {
  BrokerConfig cfg;
  FakeSink sink;
  std::unique_ptr<BrokerCore> core;
  std::map<std::string, ConnId> conns;
  ConnId next = 1;

  explicit Fixture(BrokerConfig c = {}) : cfg(c), core(std::make_unique<BrokerCore>(cfg, sink)) {}

  ConnId join(const std::string& node, std::uint64_t now = 0) {
    const ConnId c = next++;
    core->on_connect(c, now);
    core->on_frame(c, wire::RegisterFrame{node, wire::kProtocolVersion}, now);
    conns[node] = c;
    return c;
  }
  void sub(const std::string& node, wire::Subscription s, std::uint64_t now = 0) {
    core->on_frame(conns.at(node), wire::SubscribeFrame{std::move(s)}, now);
  }
  void pub(const std::string& node, const std::string& topic, std::uint64_t seq, std::uint64_t now = 0,
           std::size_t payload = 4) {
    wire::MessageEnvelope e;
    e.topic = wire::parse_topic(topic);
    e.publisher_id = node;
    e.seq = seq;
    e.payload.assign(payload, 0x5a);
    core->on_frame(conns.at(node), wire::DataFrame{e}, now);
  }
  std::vector<std::uint64_t> seqs(const std::string& node) const {
    std::vector<std::uint64_t> out;
    for (const auto& e : sink.envelopes(conns.at(node))) out.push_back(e.seq);
    return out;
  }
};

wire::Subscription channel_sub(const std::string& pattern, wire::SubscriptionId id = 1) {
  wire::Subscription s;
  s.id = id;
  s.channel_pattern = pattern;
  return s;
}

}  // namespace

TEST_SUITE("broker") {

TEST_CASE("register acks and newest connection wins") {
  Fixture f;
  const ConnId a = f.join("n1");
  CHECK(f.sink.acks(a) == std::vector<wire::AckFrame>{{0, wire::AckStatus::Ok}});
  f.sub("n1", channel_sub("x"));
  CHECK(f.core->routing().size() == 1);

  const ConnId b = f.join("n1");
  CHECK(f.sink.closed.count(a) == 1);
  CHECK(f.core->session("n1")->conn == b);
  CHECK(f.core->routing().size() == 0);
  CHECK(f.core->stats().evicted == 1);
}

TEST_CASE("version mismatch is refused") {
  Fixture f;
  f.core->on_connect(7, 0);
  f.core->on_frame(7, wire::RegisterFrame{"n1", 99}, 0);
  CHECK(f.sink.acks(7) == std::vector<wire::AckFrame>{{0, wire::AckStatus::VersionMismatch}});
  CHECK(f.sink.closed.count(7) == 1);
  CHECK(f.core->session("n1") == nullptr);
  CHECK_THROWS_AS(f.core->register_node(8, "n1", 2, 0), Error);
}

TEST_CASE("unregistered connections get NotRegistered and their data is ignored") {
  Fixture f;
  f.core->on_connect(3, 0);
  f.core->on_frame(3, wire::SubscribeFrame{channel_sub("x", 5)}, 0);
  CHECK(f.sink.acks(3) == std::vector<wire::AckFrame>{{5, wire::AckStatus::NotRegistered}});
  wire::MessageEnvelope e;
  e.topic = wire::parse_topic("/x/local/0");
  f.core->on_frame(3, wire::DataFrame{e}, 0);
  CHECK(f.core->stats().unregistered_data == 1);
  CHECK(f.core->stats().received == 0);
}

TEST_CASE("invalid pattern is rejected with an ack") {
  Fixture f;
  f.join("n1");
  f.sub("n1", channel_sub("bad/pattern", 4));
  CHECK(f.sink.acks(f.conns["n1"]).back() == wire::AckFrame{4, wire::AckStatus::PatternInvalid});
  CHECK(f.core->routing().size() == 0);
}

TEST_CASE("route examples") {
  Fixture f;
  f.join("a");
  f.join("b");
  f.join("c");
  f.sub("a", channel_sub("temp"));
  f.sub("b", channel_sub("*"));
  wire::Subscription only_global = channel_sub("temp");
  only_global.region.kind = wire::RegionFilter::Kind::Global;
  f.sub("c", only_global);

  auto route = [&](const std::string& topic, const std::string& origin) {
    wire::MessageEnvelope e;
    e.topic = wire::parse_topic(topic);
    return f.core->route(e, origin);
  };
  using V = std::vector<std::string>;
  CHECK(route("/temp/local/3", "x") == V{"a", "b"});
  CHECK(route("/temp/global/3", "x") == V{"a", "b", "c"});
  CHECK(route("/other/global/3", "x") == V{"b"});
  // Publisher does not hear itself without allow_self.
  CHECK(route("/temp/local/3", "a") == V{"b"});
  // Directed topics reach only the named node.
  CHECK(route("/temp/global/c/3", "x") == V{"c"});
  CHECK(route("/temp/local/zzz/3", "x") == V{});
}

TEST_CASE("directed-only subscriptions ignore broadcasts") {
  Fixture f;
  f.join("a");
  f.join("p");
  wire::Subscription s = channel_sub("cmd");
  s.directed = wire::DirectedMode::OnlyDirected;
  f.sub("a", s);
  f.pub("p", "/cmd/local/5", 1);
  f.pub("p", "/cmd/local/a/5", 2);
  f.core->flush_batches(2 * kMs);
  CHECK(f.seqs("a") == std::vector<std::uint64_t>{2});
}

TEST_CASE("allow_self echoes and unsubscribe stops delivery") {
  Fixture f;
  f.join("a");
  wire::Subscription s = channel_sub("x", 9);
  s.allow_self = true;
  f.sub("a", s);
  f.pub("a", "/x/local/0", 1);
  f.core->on_frame(f.conns["a"], wire::UnsubscribeFrame{9}, 0);
  f.pub("a", "/x/local/0", 2);
  f.core->flush_batches(2 * kMs);
  CHECK(f.seqs("a") == std::vector<std::uint64_t>{1});
}

TEST_CASE("full queue drops the oldest message of that priority") {
  BrokerConfig cfg;
  cfg.queue_capacity = 3;
  Fixture f(cfg);
  f.join("s");
  f.join("p");
  f.sub("s", channel_sub("x"));
  for (std::uint64_t i = 1; i <= 5; ++i) f.pub("p", "/x/local/2", i);
  f.pub("p", "/x/local/6", 100);
  CHECK(f.core->session("s")->stats.dropped == 2);
  f.core->flush_batches(2 * kMs);
  CHECK(f.seqs("s") == std::vector<std::uint64_t>{100, 3, 4, 5});
}

TEST_CASE("strict priority then FIFO") {
  Fixture f;
  f.join("s");
  f.join("p");
  f.sub("s", channel_sub("x"));
  f.pub("p", "/x/local/1", 1);
  f.pub("p", "/x/local/7", 2);
  f.pub("p", "/x/local/1", 3);
  f.pub("p", "/x/local/4", 4);
  f.pub("p", "/x/local/7", 5);
  f.core->flush_batches(2 * kMs);
  CHECK(f.seqs("s") == std::vector<std::uint64_t>{2, 5, 4, 1, 3});
  CHECK(f.sink.frames[f.conns["s"]].size() == 3);  // two acks plus one batch
}

TEST_CASE("residence flush happens at the deadline and not before") {
  Fixture f;
  f.join("s");
  f.join("p");
  f.sub("s", channel_sub("x"));
  f.pub("p", "/x/local/0", 1, 10 * kMs);
  CHECK(f.core->next_flush_deadline() == 11 * kMs);
  CHECK(f.core->flush_batches(10 * kMs + kMs - 1) == 0);
  CHECK(f.core->flush_batches(11 * kMs) == 1);
  CHECK(f.seqs("s") == std::vector<std::uint64_t>{1});
  CHECK_FALSE(f.core->has_queued());
}

TEST_CASE("byte threshold flush sends before the residence deadline") {
  Fixture f;
  f.join("s");
  f.join("p");
  f.sub("s", channel_sub("x"));
  std::vector<DispatchRecord> seen;
  f.core->set_dispatch_observer([&](const DispatchRecord& r) { seen.push_back(r); });
  f.pub("p", "/x/local/3", 0, 0, 128);
  const std::size_t each = f.core->session("s")->queued_bytes;
  const std::size_t below = (f.cfg.batch_bytes_threshold - 1) / each;
  for (std::uint64_t i = 1; i < below; ++i) f.pub("p", "/x/local/3", i, 0, 128);
  CHECK(f.core->flush_batches(1) == 0);
  for (std::uint64_t i = below; i < 600; ++i) f.pub("p", "/x/local/3", i, 0, 128);
  CHECK(f.core->session("s")->queued_bytes >= f.cfg.batch_bytes_threshold);
  CHECK(f.core->flush_batches(1) == 1);
  CHECK(seen.size() == 600);
  CHECK(f.sink.envelopes(f.conns["s"]).size() == 600);
  CHECK(seen.back().send_ns - seen.back().enqueue_ns == 1);
}

TEST_CASE("empty queues send nothing") {
  Fixture f;
  f.join("s");
  f.sink.clear();
  CHECK(f.core->flush_batches(100 * kMs) == 0);
  CHECK(f.sink.frames.empty());
  CHECK_FALSE(f.core->next_flush_deadline().has_value());
}

TEST_CASE("backpressured sessions keep their queue") {
  Fixture f;
  f.join("s");
  f.join("p");
  f.sub("s", channel_sub("x"));
  f.pub("p", "/x/local/0", 1);
  f.sink.blocked.insert(f.conns["s"]);
  CHECK(f.core->flush_batches(5 * kMs) == 0);
  CHECK(f.core->session("s")->queued_count == 1);
  f.sink.blocked.clear();
  CHECK(f.core->flush_batches(5 * kMs) == 1);
}

TEST_CASE("liveness expires silent sessions and discards their queue") {
  Fixture f;
  f.join("s", 0);
  f.join("p", 0);
  f.sub("s", channel_sub("x"));
  f.pub("p", "/x/local/0", 1, 0);
  const auto timeout = f.cfg.heartbeat_timeout_ns;
  // Any frame refreshes the deadline.
  f.core->on_frame(f.conns["p"], wire::HeartbeatFrame{"p", 1}, timeout - 1);
  CHECK(f.core->check_liveness(timeout).empty());
  const auto expired = f.core->check_liveness(timeout + 1);
  CHECK(expired == std::vector<std::string>{"s"});
  CHECK(f.sink.closed.count(f.conns["s"]) == 1);
  CHECK(f.core->stats().discarded == 1);
  CHECK(f.core->session("p") != nullptr);
  CHECK(f.core->routing().size() == 0);
  CHECK(f.core->check_liveness(2 * timeout).size() == 1);
}

TEST_CASE("heartbeats are echoed and stats answer without registration") {
  Fixture f;
  f.core->on_connect(1, 0);
  f.core->on_frame(1, wire::HeartbeatFrame{"x", 42}, 0);
  f.core->on_frame(1, wire::StatsRequestFrame{}, 0);
  const auto& frames = f.sink.frames[1];
  REQUIRE(frames.size() == 2);
  CHECK(std::get<wire::HeartbeatFrame>(frames[0]) == wire::HeartbeatFrame{"master", 42});
  const auto& text = std::get<wire::StatsReplyFrame>(frames[1]).text;
  CHECK(text.find("\"type\":\"broker\"") != std::string::npos);
  CHECK(text.find("\"routing_consistent\":true") != std::string::npos);
}

TEST_CASE("random operations agree with the reference model") {
  std::size_t deliveries = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto r = testing::run_routing_property(seed, 500);
    for (const auto& msg : r.failures) MESSAGE(msg);
    CHECK(r.failures.empty());
    deliveries += r.deliveries;
  }
  CHECK(deliveries > 100);
}

TEST_CASE("config validation") {
  BrokerConfig c;
  c.tick_ns = c.max_residence_ns;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.queue_capacity = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("status segment round trip") {
  testing::TempDir dir;
  auto seg = StatusSegment::create(dir.file("b.status"));
  seg.publish({1, 7400, 5, 6, 2, 10, 9, 1});
  const auto r = StatusSegment::read(dir.file("b.status"));
  REQUIRE(r.has_value());
  CHECK(r->port == 7400);
  CHECK(r->delivered == 9);
  seg.remove();
  CHECK_FALSE(StatusSegment::read(dir.file("b.status")).has_value());
}

}  // TEST_SUITE
