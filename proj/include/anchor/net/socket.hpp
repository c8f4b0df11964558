#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "anchor/wire/frame.hpp"

namespace anchor::net {

/// "host:port". Host may be a dotted IPv4 address or "localhost".
struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// Throws Error(ConfigError).
  static Endpoint parse(std::string_view s);
  std::string to_string() const;

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) noexcept : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void reset() noexcept;

 private:
  int fd_ = -1;
};

/// Non-blocking listening socket with SO_REUSEADDR. Port 0 picks a free port.
Fd listen_tcp(const Endpoint& ep, int backlog = 128);
std::uint16_t local_port(int fd);
/// Starts a non-blocking connect. Completion is signalled by POLLOUT; then
/// call connect_error() to learn the outcome. Throws Error(IoFailure) only
/// for immediate local failures.
Fd start_connect(const Endpoint& ep);
/// 0 when connected, else the errno value.
int connect_error(int fd);
/// Accepts one pending connection or returns an invalid Fd.
Fd accept_conn(int listen_fd);
void configure_stream(int fd);

/// Wakes a poll loop from another thread.
class Waker {
 public:
  Waker();
  int fd() const noexcept { return fd_.get(); }
  void wake() const noexcept;
  void drain() const noexcept;

 private:
  Fd fd_;
};

enum class IoStatus { Ok, WouldBlock, Closed };

/// Framed byte stream over a non-blocking socket: decodes inbound frames and
/// queues outbound bytes.
class StreamConn {
 public:
  StreamConn(Fd fd, wire::Limits limits) : fd_(std::move(fd)), decoder_(limits), limits_(limits) {}

  int fd() const noexcept { return fd_.get(); }

  /// Reads what is available and appends complete frames. Returns Closed on EOF
  /// or socket error. Throws Error on corrupt input.
  IoStatus read_frames(std::vector<wire::Frame>& out);

  void queue(const wire::Frame& f) { wire::encode_frame(f, out_, limits_); }
  void queue_bytes(wire::ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }

  /// Writes as much queued output as the socket accepts.
  IoStatus flush();
  bool want_write() const noexcept { return out_pos_ < out_.size(); }
  std::size_t pending_bytes() const noexcept { return out_.size() - out_pos_; }
  /// Total bytes handed to the kernel so far.
  std::uint64_t bytes_written() const noexcept { return written_; }

 private:
  Fd fd_;
  wire::FrameDecoder decoder_;
  wire::Limits limits_;
  wire::Bytes out_;
  std::size_t out_pos_ = 0;
  std::uint64_t written_ = 0;
};

}  // namespace anchor::net
