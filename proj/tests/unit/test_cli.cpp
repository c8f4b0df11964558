#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

#include "anchor/demo/messages.hpp"
#include "anchor/demo/roles.hpp"
#include "anchor/process.hpp"
#include "anchor/records/replay_log.hpp"

using namespace anchor;

namespace {

struct Run {
  int code;
  std::string output;
};

Run anchorctl(const testing::TempDir& dir, std::vector<std::string> args) {
  args.insert(args.begin(), ANCHORCTL_PATH);
  const auto log = dir.file("cli.out");
  std::filesystem::remove(log);
  auto child = ChildProcess::spawn(args, log);
  const auto code = child.wait_for(std::chrono::seconds(60));
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {code ? *code : -1, ss.str()};
}

void write(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kDemoConf =
    "[demo]\ncycle_ms = 40\nwindow = 4\nfeatures = 1\n"
    "[project.alpha]\ntheta = 0.5\ngain = 0.5\ninitial = 0\n";

// An executor-style log: each command followed by its Started and result events.
void write_executor_log(const std::string& path, const demo::ProjectConfig& p, double skew) {
  auto log = records::ReplayLogWriter::open(path);
  demo::ExecutorCore core({p});
  double sensor = p.initial;
  for (std::uint64_t i = 0; i < 5; ++i) {
    auto c = demo::infer(sensor, 1, p, i);
    const std::uint64_t seq = i + 1;
    log.append(records::LogKind::Command, demo::encode_logged(seq, demo::encode(c)), 0);
    auto [started, result] = core.execute(seq, c);
    sensor = result.measured;
    result.measured += skew;
    log.append(records::LogKind::Event, demo::encode_logged(100 + 2 * i, demo::encode(started)), 0);
    log.append(records::LogKind::Event, demo::encode_logged(101 + 2 * i, demo::encode(result)), 0);
  }
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1") {
  testing::TempDir dir;
  CHECK(anchorctl(dir, {}).code == 1);
  CHECK(anchorctl(dir, {"frobnicate"}).code == 1);
  CHECK(anchorctl(dir, {"broker", "--no-such-flag"}).code == 1);
  CHECK(anchorctl(dir, {"--help"}).code == 0);
}

TEST_CASE("configuration errors exit 2") {
  testing::TempDir dir;
  CHECK(anchorctl(dir, {"broker", "--config", dir.file("missing.conf")}).code == 2);
  write(dir.file("bad.conf"), "[broker]\nqueue_capacity = many\n");
  CHECK(anchorctl(dir, {"broker", "--config", dir.file("bad.conf"), "--check-config"}).code == 2);
  write(dir.file("syntax.conf"), "[broker\n");
  CHECK(anchorctl(dir, {"broker", "--config", dir.file("syntax.conf"), "--check-config"}).code == 2);
  write(dir.file("gw.conf"), "[cluster.A]\nendpoint = 127.0.0.1:1\n");
  CHECK(anchorctl(dir, {"gateway", "--config", dir.file("gw.conf"), "--check-config"}).code == 2);
}

TEST_CASE("check-config validates without side effects") {
  testing::TempDir dir;
  write(dir.file("b.conf"), "[broker]\nqueue_capacity = 16\n");
  const auto r = anchorctl(dir, {"broker", "--config", dir.file("b.conf"), "--check-config", "--port-file",
                                 dir.file("port"), "--status", dir.file("status")});
  CHECK(r.code == 0);
  CHECK_FALSE(std::filesystem::exists(dir.file("port")));
  CHECK_FALSE(std::filesystem::exists(dir.file("status")));

  write(dir.file("demo.conf"), kDemoConf);
  CHECK(anchorctl(dir, {"demo", "run", "--config", dir.file("demo.conf"), "--run-dir", dir.file("run"),
                        "--check-config"})
            .code == 0);
  CHECK_FALSE(std::filesystem::exists(dir.file("run")));
}

TEST_CASE("records dump of a fresh region shows zeros") {
  testing::TempDir dir;
  write(dir.file("demo.conf"), kDemoConf);
  REQUIRE(anchorctl(dir, {"demo", "init", "--config", dir.file("demo.conf"), "--run-dir", dir.file("run")}).code == 0);
  const auto r = anchorctl(dir, {"records", "dump", "--region", dir.file("run/region.anc")});
  CHECK(r.code == 0);
  const auto doc = nlohmann::json::parse(r.output);
  CHECK(doc["version_counter"] == 0);
  REQUIRE(doc["groups"].size() == 3);
  CHECK(doc["groups"][0]["name"] == "alpha.agg");
  for (const auto& g : doc["groups"]) {
    CHECK(g["version_counter"] == 0);
    for (const auto& x : g["values"]) CHECK(x == 0.0);
  }
  CHECK(anchorctl(dir, {"records", "dump", "--region", dir.file("nope.anc")}).code == 3);
}

TEST_CASE("log replay matches its own log and flags a divergent one") {
  testing::TempDir dir;
  write(dir.file("demo.conf"), kDemoConf);
  demo::ProjectConfig p;
  p.project_id = "alpha";
  p.theta = 0.5;
  p.gain = 0.5;
  p.command_channel = "cmd_alpha";
  p.status_channel = "status_alpha";
  write_executor_log(dir.file("good.log"), p, 0.0);
  write_executor_log(dir.file("skewed.log"), p, 1e-6);
  const auto ok = anchorctl(dir, {"log", "replay", "--path", dir.file("good.log"), "--config", dir.file("demo.conf")});
  CHECK(ok.code == 0);
  const auto bad = anchorctl(dir, {"log", "replay", "--path", dir.file("good.log"), "--verify-against",
                                   dir.file("skewed.log"), "--config", dir.file("demo.conf")});
  CHECK(bad.code == 4);
  CHECK(bad.output.find("cycle 0") != std::string::npos);
}

TEST_CASE("stats against a live broker") {
  testing::TempDir dir;
  testing::ServerThread server;
  const auto r = anchorctl(dir, {"stats", "--endpoint", server.endpoint().to_string()});
  CHECK(r.code == 0);
  CHECK(r.output.find("\"type\":\"broker\"") != std::string::npos);
  CHECK(anchorctl(dir, {"stats", "--endpoint", "127.0.0.1:1"}).code == 3);
}

}  // TEST_SUITE
