#include "anchor/net/socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "anchor/error.hpp"

namespace anchor::net {

namespace {

std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

sockaddr_in to_sockaddr(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  const std::string host = ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw Error(Errc::ConfigError, "not an IPv4 address: " + ep.host);
  }
  return addr;
}

}  // namespace

Endpoint Endpoint::parse(std::string_view s) {
  if (s.rfind("tcp://", 0) == 0) s.remove_prefix(6);
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw Error(Errc::ConfigError, "endpoint '" + std::string(s) + "' is not host:port");
  Endpoint ep;
  ep.host = std::string(s.substr(0, colon));
  const auto port = s.substr(colon + 1);
  unsigned value = 0;
  auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc{} || p != port.data() + port.size() || value > 65535) {
    throw Error(Errc::ConfigError, "endpoint '" + std::string(s) + "' has a bad port");
  }
  ep.port = static_cast<std::uint16_t>(value);
  to_sockaddr(ep);
  return ep;
}

std::string Endpoint::to_string() const { return host + ":" + std::to_string(port); }

void Fd::reset() noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void configure_stream(int fd) {
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

Fd listen_tcp(const Endpoint& ep, int backlog) {
  const auto addr = to_sockaddr(ep);
  Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0));
  if (!fd.valid()) throw Error(Errc::IoFailure, errno_text("socket"));
  const int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    throw Error(Errc::IoFailure, errno_text("bind " + ep.to_string()));
  }
  if (::listen(fd.get(), backlog) != 0) throw Error(Errc::IoFailure, errno_text("listen " + ep.to_string()));
  return fd;
}

std::uint16_t local_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) throw Error(Errc::IoFailure, errno_text("getsockname"));
  return ntohs(addr.sin_port);
}

Fd start_connect(const Endpoint& ep) {
  const auto addr = to_sockaddr(ep);
  Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0));
  if (!fd.valid()) throw Error(Errc::IoFailure, errno_text("socket"));
  configure_stream(fd.get());
  const int r = ::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr);
  if (r != 0 && errno != EINPROGRESS) throw Error(Errc::IoFailure, errno_text("connect " + ep.to_string()));
  return fd;
}

int connect_error(int fd) {
  int err = 0;
  socklen_t len = sizeof err;
  if (::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) != 0) return errno;
  return err;
}

Fd accept_conn(int listen_fd) {
  const int fd = ::accept4(listen_fd, nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
  if (fd < 0) return Fd{};
  configure_stream(fd);
  return Fd(fd);
}

Waker::Waker() : fd_(::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC)) {
  if (!fd_.valid()) throw Error(Errc::IoFailure, errno_text("eventfd"));
}

void Waker::wake() const noexcept {
  const std::uint64_t one = 1;
  [[maybe_unused]] auto r = ::write(fd_.get(), &one, sizeof one);
}

void Waker::drain() const noexcept {
  std::uint64_t v = 0;
  [[maybe_unused]] auto r = ::read(fd_.get(), &v, sizeof v);
}

IoStatus StreamConn::read_frames(std::vector<wire::Frame>& out) {
  std::uint8_t buf[64 * 1024];
  IoStatus status = IoStatus::WouldBlock;
  while (true) {
    const ssize_t n = ::recv(fd_.get(), buf, sizeof buf, 0);
    if (n > 0) {
      decoder_.feed(wire::ByteView(buf, static_cast<std::size_t>(n)));
      status = IoStatus::Ok;
      if (static_cast<std::size_t>(n) < sizeof buf) break;
      continue;
    }
    if (n == 0) {
      status = IoStatus::Closed;
      break;
    }
    if (errno == EINTR) continue;
    if (errno == EAGAIN || errno == EWOULDBLOCK) break;
    status = IoStatus::Closed;
    break;
  }
  while (auto f = decoder_.next()) out.push_back(std::move(*f));
  return status;
}

IoStatus StreamConn::flush() {
  while (out_pos_ < out_.size()) {
    const ssize_t n = ::send(fd_.get(), out_.data() + out_pos_, out_.size() - out_pos_, MSG_NOSIGNAL);
    if (n > 0) {
      out_pos_ += static_cast<std::size_t>(n);
      written_ += static_cast<std::uint64_t>(n);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      if (out_pos_ > (1u << 20)) {
        out_.erase(out_.begin(), out_.begin() + static_cast<std::ptrdiff_t>(out_pos_));
        out_pos_ = 0;
      }
      return IoStatus::WouldBlock;
    }
    return IoStatus::Closed;
  }
  out_.clear();
  out_pos_ = 0;
  return IoStatus::Ok;
}

}  // namespace anchor::net
