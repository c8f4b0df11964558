// Shared helpers for unit and acceptance tests.
#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "anchor/broker/broker_server.hpp"

namespace anchor::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "anchor") {
    std::string tmpl = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    path_ = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// A BrokerServer on its own thread, listening on an ephemeral port.
class ServerThread {
 public:
  explicit ServerThread(broker::BrokerConfig config = {}, std::uint16_t port = 0) {
    broker::ServerOptions o;
    o.listen = net::Endpoint{"127.0.0.1", port};
    server_ = std::make_unique<broker::BrokerServer>(config, o);
    thread_ = std::thread([this] { server_->run(); });
  }
  ~ServerThread() { stop(); }

  void stop() {
    if (!server_) return;
    server_->stop();
    thread_.join();
    server_.reset();
  }
  net::Endpoint endpoint() const { return {"127.0.0.1", port()}; }
  std::uint16_t port() const noexcept { return server_->port(); }

 private:
  std::unique_ptr<broker::BrokerServer> server_;
  std::thread thread_;
};

inline bool eventually(const std::function<bool()>& pred, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return pred();
}

}  // namespace anchor::testing
