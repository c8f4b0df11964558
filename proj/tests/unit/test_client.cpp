#include <algorithm>
#include <mutex>

#include "doctest.h"
#include "support.hpp"

#include "anchor/bench/harness.hpp"
#include "anchor/bench/stats.hpp"
#include "anchor/client/client.hpp"
#include "anchor/clock.hpp"
#include "anchor/error.hpp"

using namespace anchor;
using namespace anchor::client;
using namespace std::chrono_literals;

namespace {

constexpr std::uint64_t kMs = 1'000'000;

std::uint16_t unused_port() {
  testing::ServerThread probe;
  const auto p = probe.port();
  probe.stop();
  return p;
}

ClientOptions options(const std::string& node, std::uint16_t port) {
  ClientOptions o;
  o.endpoint = {"127.0.0.1", port};
  o.node_id = node;
  o.heartbeat_interval_ns = 100 * kMs;
  o.heartbeat_timeout_ns = 300 * kMs;
  o.backoff.base_ns = 20 * kMs;
  o.backoff.cap_ns = 200 * kMs;
  o.rng_seed = 42;
  return o;
}

wire::Subscription on(const std::string& channel) {
  wire::Subscription s;
  s.channel_pattern = channel;
  return s;
}

struct Inbox {
  std::mutex mu;
  std::vector<wire::MessageEnvelope> got;
  Handler handler() {
    return [this](const wire::MessageEnvelope& e) {
      std::lock_guard lk(mu);
      got.push_back(e);
    };
  }
  std::size_t size() {
    std::lock_guard lk(mu);
    return got.size();
  }
  std::vector<std::uint64_t> seqs() {
    std::lock_guard lk(mu);
    std::vector<std::uint64_t> out;
    for (const auto& e : got) out.push_back(e.seq);
    return out;
  }
};

}  // namespace

TEST_SUITE("client") {

TEST_CASE("recovery machine walks the fault cycle") {
  RecoveryMachine m(BackoffPolicy{}, 1);
  CHECK(m.step(RecoveryEvent::Start).action == RecoveryAction::StartConnect);
  CHECK(m.state() == ConnState::Connecting);
  CHECK(m.step(RecoveryEvent::ConnEstablished).action == RecoveryAction::SendRegistration);
  CHECK(m.step(RecoveryEvent::RegisterAcked).to == ConnState::Registered);
  CHECK(m.step(RecoveryEvent::BackoffElapsed).action == RecoveryAction::None);
  auto t = m.step(RecoveryEvent::RxSilence);
  CHECK(t.to == ConnState::Draining);
  CHECK(t.action == RecoveryAction::CloseConnection);
  CHECK(m.step(RecoveryEvent::RegisterAcked).to == ConnState::Draining);
  t = m.step(RecoveryEvent::CleanupDone);
  CHECK(t.to == ConnState::Disconnected);
  CHECK(t.action == RecoveryAction::ScheduleBackoff);
  CHECK(t.delay_ns >= 80 * kMs);
  CHECK(t.delay_ns <= 120 * kMs);
  CHECK(m.step(RecoveryEvent::BackoffElapsed).to == ConnState::Connecting);
}

TEST_CASE("backoff doubles, caps, and resets on registration") {
  BackoffPolicy p;
  p.jitter = 0;
  CHECK(p.nominal_ns(1) == 100 * kMs);
  CHECK(p.nominal_ns(2) == 200 * kMs);
  CHECK(p.nominal_ns(3) == 400 * kMs);
  CHECK(p.nominal_ns(10) == 5000 * kMs);

  RecoveryMachine m(p, 3);
  m.step(RecoveryEvent::Start);
  std::vector<std::uint64_t> delays;
  for (int i = 0; i < 5; ++i) {
    m.step(RecoveryEvent::ConnError);
    delays.push_back(m.step(RecoveryEvent::CleanupDone).delay_ns);
    m.step(RecoveryEvent::BackoffElapsed);
  }
  CHECK(delays == std::vector<std::uint64_t>{100 * kMs, 200 * kMs, 400 * kMs, 800 * kMs, 1600 * kMs});
  m.step(RecoveryEvent::ConnEstablished);
  m.step(RecoveryEvent::RegisterAcked);
  CHECK(m.failures() == 0);
  m.step(RecoveryEvent::HeartbeatAckMissing);
  CHECK(m.step(RecoveryEvent::CleanupDone).delay_ns == 100 * kMs);
}

TEST_CASE("jittered delays stay inside the band") {
  BackoffPolicy p;
  std::mt19937_64 rng(9);
  for (unsigned n = 1; n <= 8; ++n) {
    for (int i = 0; i < 200; ++i) {
      const auto d = p.draw_ns(n, rng);
      CHECK(d >= p.lower_bound_ns(n));
      CHECK(d <= p.upper_bound_ns(n));
    }
  }
}

TEST_CASE("loopback publish and subscribe") {
  testing::ServerThread server;
  Client sub(options("sub", server.port()));
  Client pub(options("pub", server.port()));
  Inbox inbox;
  sub.subscribe(on("x"), inbox.handler());
  REQUIRE(bench::wait_for_subscriptions(server.endpoint(), "sub", 1, 5000ms));
  REQUIRE(pub.wait_registered(5000ms));
  std::uint64_t seq = 0;
  CHECK(pub.publish(wire::parse_topic("/x/local/3"), {1, 2, 3}, &seq) == PublishResult::Accepted);
  CHECK(seq == 1);
  pub.publish(wire::parse_topic("/y/local/3"), {4});
  pub.publish(wire::parse_topic("/x/local/3"), {5});
  REQUIRE(testing::eventually([&] { return inbox.size() == 2; }, 5000ms));
  CHECK(inbox.seqs() == std::vector<std::uint64_t>{1, 3});
  CHECK(inbox.got[0].publisher_id == "pub");
  CHECK(inbox.got[0].payload == wire::Bytes{1, 2, 3});
}

TEST_CASE("invalid arguments throw") {
  Client c(options("c", unused_port()));
  CHECK_THROWS_AS(c.subscribe(on("bad/x"), {}), Error);
  wire::TopicAddress t;
  t.channel = "";
  CHECK_THROWS_AS(c.publish(t, {}), Error);
  CHECK_THROWS_AS(c.publish(wire::parse_topic("/x/local/0"), wire::Bytes((1u << 20) + 1)), Error);
}

TEST_CASE("full send queue drops its oldest entries") {
  const auto port = unused_port();
  auto o = options("pub", port);
  o.send_queue_capacity = 8;
  o.backoff.base_ns = 1000 * kMs;
  o.backoff.factor = 1.0;
  o.backoff.jitter = 0;
  Client pub(o);
  REQUIRE(testing::eventually([&] { return pub.connect_attempts().size() >= 1; }, 2000ms));
  std::vector<PublishResult> results;
  for (int i = 0; i < 10; ++i) results.push_back(pub.publish(wire::parse_topic("/x/local/1"), {}));
  CHECK(std::count(results.begin(), results.end(), PublishResult::DroppedLocal) == 2);
  CHECK(pub.stats().dropped_local == 2);

  // Bring the broker up between two attempts so the subscriber is in place first.
  const auto attempts = pub.connect_attempts().size();
  REQUIRE(testing::eventually([&] { return pub.connect_attempts().size() > attempts; }, 3000ms));
  testing::ServerThread server({}, port);
  Client sub(options("sub", port));
  Inbox inbox;
  sub.subscribe(on("x"), inbox.handler());
  REQUIRE(bench::wait_for_subscriptions(server.endpoint(), "sub", 1, 800ms));
  REQUIRE(testing::eventually([&] { return inbox.size() == 8; }, 5000ms));
  CHECK(inbox.seqs() == std::vector<std::uint64_t>{3, 4, 5, 6, 7, 8, 9, 10});
}

TEST_CASE("seq keeps increasing across a reconnect and subscriptions come back") {
  const auto port = unused_port();
  auto server = std::make_unique<testing::ServerThread>(broker::BrokerConfig{}, port);
  Client sub(options("sub", port));
  Client pub(options("pub", port));
  Inbox inbox;
  sub.subscribe(on("x"), inbox.handler());
  REQUIRE(bench::wait_for_subscriptions(server->endpoint(), "sub", 1, 5000ms));
  REQUIRE(pub.wait_registered(5000ms));
  pub.publish(wire::parse_topic("/x/local/1"), {});
  REQUIRE(testing::eventually([&] { return inbox.size() == 1; }, 5000ms));

  server->stop();
  REQUIRE(testing::eventually([&] { return pub.state() != ConnState::Registered; }, 5000ms));
  std::uint64_t seq = 0;
  pub.publish(wire::parse_topic("/x/local/1"), {}, &seq);
  CHECK(seq == 2);
  server = std::make_unique<testing::ServerThread>(broker::BrokerConfig{}, port);
  REQUIRE(bench::wait_for_subscriptions(server->endpoint(), "sub", 1, 5000ms));
  CHECK(bench::subscribed_channels(server->endpoint(), "sub") == std::vector<std::string>{"x"});
  pub.publish(wire::parse_topic("/x/local/1"), {});
  REQUIRE(testing::eventually([&] { return !inbox.seqs().empty() && inbox.seqs().back() == 3; }, 5000ms));
  const auto seqs = inbox.seqs();
  CHECK(std::is_sorted(seqs.begin(), seqs.end()));
}

TEST_CASE("subscribing while down registers on connect; unsubscribe is honoured") {
  const auto port = unused_port();
  Client sub(options("sub", port));
  Inbox inbox;
  const auto a = sub.subscribe(on("a"), inbox.handler());
  sub.subscribe(on("b"), inbox.handler());
  CHECK(sub.desired_subscriptions().size() == 2);
  testing::ServerThread server({}, port);
  REQUIRE(bench::wait_for_subscriptions(server.endpoint(), "sub", 2, 5000ms));
  sub.unsubscribe(a);
  REQUIRE(testing::eventually(
      [&] { return bench::subscribed_channels(server.endpoint(), "sub") == std::vector<std::string>{"b"}; }, 5000ms));
  CHECK(sub.desired_subscriptions().size() == 1);
}

TEST_CASE("subscriptions converge after every broker crash") {
  const auto port = unused_port();
  Client sub(options("sub", port));
  Inbox inbox;
  sub.subscribe(on("a"), inbox.handler());
  sub.subscribe(on("b"), inbox.handler());
  auto desired = [&] {
    std::vector<std::string> out;
    for (const auto& s : sub.desired_subscriptions()) out.push_back(s.channel_pattern);
    std::sort(out.begin(), out.end());
    return out;
  };
  for (int round = 0; round < 5; ++round) {
    testing::ServerThread server({}, port);
    const auto want = desired();
    REQUIRE(bench::wait_for_subscriptions(server.endpoint(), "sub", want.size(), 5000ms));
    auto channels = bench::subscribed_channels(server.endpoint(), "sub");
    std::sort(channels.begin(), channels.end());
    CHECK(channels == want);
    // Change the desired set while connected; the next broker must see the change.
    if (round == 1) sub.subscribe(on("c"), inbox.handler());
    if (round == 3) sub.unsubscribe(sub.desired_subscriptions().front().id);
  }
  CHECK(desired() == std::vector<std::string>{"b", "c"});
}

TEST_CASE("reconnect attempts respect the backoff lower bound") {
  auto o = options("c", unused_port());
  o.backoff.base_ns = 20 * kMs;
  o.backoff.cap_ns = 160 * kMs;
  Client c(o);
  std::this_thread::sleep_for(1200ms);
  const auto at = c.connect_attempts();
  REQUIRE(at.size() >= 4);
  for (std::size_t i = 1; i < at.size(); ++i) {
    const auto gap = at[i] - at[i - 1];
    CHECK(gap >= o.backoff.lower_bound_ns(static_cast<unsigned>(i)));
  }
}

TEST_CASE("publishing while disconnected stays fast") {
  auto o = options("c", unused_port());
  o.send_queue_capacity = 1u << 16;
  Client c(o);
  const auto topic = wire::parse_topic("/x/local/1");
  std::vector<std::uint64_t> lat;
  for (int i = 0; i < 20000; ++i) {
    wire::Bytes payload(128);
    const auto t0 = monotonic_ns();
    c.publish(topic, std::move(payload));
    lat.push_back(monotonic_ns() - t0);
  }
  const auto p = bench::percentiles(lat, {99});
  MESSAGE("disconnected publish p99 " << p.at(0) << " ns");
  CHECK(p.at(0) < 100'000);
}

TEST_CASE("stats query reports sessions") {
  testing::ServerThread server;
  Client c(options("c", server.port()));
  REQUIRE(c.wait_registered(5000ms));
  const auto text = query_stats(server.endpoint(), 2000ms);
  CHECK(text.find("\"node_id\":\"c\"") != std::string::npos);
}

}  // TEST_SUITE
