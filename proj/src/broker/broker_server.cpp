#include "anchor/broker/broker_server.hpp"

#include <poll.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include <spdlog/spdlog.h>

#include "anchor/clock.hpp"
#include "anchor/error.hpp"

namespace anchor::broker {

namespace {

constexpr std::uint64_t kLivenessPeriodNs = 50 * kNsPerMs;
constexpr std::uint64_t kStatusPeriodNs = 100 * kNsPerMs;
constexpr std::uint64_t kIdleWaitNs = 50 * kNsPerMs;

void write_port_file(const std::string& path, std::uint16_t port) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + tmp);
    out << port << "\n";
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

BrokerServer::BrokerServer(BrokerConfig config, ServerOptions options)
    : core_(std::move(config), *this), options_(std::move(options)) {
  listener_ = net::listen_tcp(options_.listen);
  port_ = net::local_port(listener_.get());
  started_ns_ = monotonic_ns();
  if (!options_.status_path.empty()) status_ = StatusSegment::create(options_.status_path);
  if (!options_.port_file.empty()) write_port_file(options_.port_file, port_);
}

BrokerServer::~BrokerServer() = default;

void BrokerServer::stop() noexcept {
  stop_.store(true, std::memory_order_release);
  waker_.wake();
}

bool BrokerServer::can_send(ConnId conn) {
  auto it = conns_.find(conn);
  if (it == conns_.end() || closing_.count(conn)) return true;  // sends to it are discarded
  return it->second->pending_bytes() < core_.config().send_buffer_limit;
}

void BrokerServer::send(ConnId conn, wire::Bytes&& frame) {
  auto it = conns_.find(conn);
  if (it == conns_.end() || closing_.count(conn)) return;
  it->second->queue_bytes(frame);
  if (it->second->flush() == net::IoStatus::Closed) closing_.insert(conn);
}

void BrokerServer::close(ConnId conn) { closing_.insert(conn); }

void BrokerServer::accept_pending(std::uint64_t now) {
  while (true) {
    net::Fd fd = net::accept_conn(listener_.get());
    if (!fd.valid()) return;
    const ConnId id = next_conn_++;
    conns_.emplace(id, std::make_unique<net::StreamConn>(std::move(fd), core_.config().limits));
    core_.on_connect(id, now);
  }
}

void BrokerServer::service_reads(ConnId id, std::uint64_t now) {
  auto it = conns_.find(id);
  if (it == conns_.end()) return;
  std::vector<wire::Frame> frames;
  net::IoStatus status;
  try {
    status = it->second->read_frames(frames);
  } catch (const Error& e) {
    spdlog::warn("conn {}: {}; closing", id, e.what());
    status = net::IoStatus::Closed;
  }
  for (const auto& f : frames) {
    if (closing_.count(id)) break;
    core_.on_frame(id, f, now);
  }
  if (status == net::IoStatus::Closed) closing_.insert(id);
}

void BrokerServer::reap_closed() {
  while (!closing_.empty()) {
    const ConnId id = *closing_.begin();
    closing_.erase(closing_.begin());
    auto it = conns_.find(id);
    if (it == conns_.end()) continue;
    it->second->flush();
    conns_.erase(it);
    core_.on_disconnect(id);
  }
}

void BrokerServer::publish_status(std::uint64_t now) {
  if (!status_) return;
  const auto& st = core_.stats();
  status_->publish(StatusSnapshot{static_cast<std::uint64_t>(::getpid()), port_, started_ns_, now,
                                  core_.session_count(), st.received, st.delivered, st.dropped});
}

int BrokerServer::poll_timeout_ns(std::uint64_t now) const {
  std::uint64_t wait = kIdleWaitNs;
  if (auto deadline = core_.next_flush_deadline()) {
    wait = std::min<std::uint64_t>(core_.config().tick_ns, *deadline > now ? *deadline - now : 0);
  }
  return static_cast<int>(wait);
}

void BrokerServer::run() {
  spdlog::info("broker '{}' listening on {}:{}", core_.config().broker_id, options_.listen.host, port_);
  std::uint64_t next_liveness = monotonic_ns() + kLivenessPeriodNs;
  std::uint64_t next_status = 0;
  std::vector<pollfd> fds;
  std::vector<ConnId> ids;

  while (!stop_.load(std::memory_order_acquire)) {
    fds.clear();
    ids.clear();
    fds.push_back({listener_.get(), POLLIN, 0});
    fds.push_back({waker_.fd(), POLLIN, 0});
    for (const auto& [id, c] : conns_) {
      fds.push_back({c->fd(), static_cast<short>(POLLIN | (c->want_write() ? POLLOUT : 0)), 0});
      ids.push_back(id);
    }
    const std::uint64_t before = monotonic_ns();
    const std::uint64_t wait = static_cast<std::uint64_t>(poll_timeout_ns(before));
    timespec ts{static_cast<time_t>(wait / kNsPerSec), static_cast<long>(wait % kNsPerSec)};
    const int n = ::ppoll(fds.data(), fds.size(), &ts, nullptr);
    if (n < 0 && errno != EINTR) throw Error(Errc::IoFailure, "ppoll failed");

    const std::uint64_t now = monotonic_ns();
    if (n > 0) {
      if (fds[1].revents & POLLIN) waker_.drain();
      for (std::size_t i = 2; i < fds.size(); ++i) {
        const ConnId id = ids[i - 2];
        if (fds[i].revents & POLLOUT) {
          auto it = conns_.find(id);
          if (it != conns_.end() && it->second->flush() == net::IoStatus::Closed) closing_.insert(id);
        }
        if (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) service_reads(id, now);
      }
      if (fds[0].revents & POLLIN) accept_pending(now);
    }
    core_.flush_batches(monotonic_ns());
    if (now >= next_liveness) {
      for (const auto& node : core_.check_liveness(now)) spdlog::info("session '{}' expired", node);
      next_liveness = now + kLivenessPeriodNs;
    }
    reap_closed();
    if (now >= next_status) {
      publish_status(now);
      next_status = now + kStatusPeriodNs;
    }
  }

  for (auto& [id, c] : conns_) {
    c->flush();
    core_.on_disconnect(id);
  }
  conns_.clear();
  closing_.clear();
  publish_status(monotonic_ns());
  spdlog::info("broker '{}' stopped", core_.config().broker_id);
}

}  // namespace anchor::broker
