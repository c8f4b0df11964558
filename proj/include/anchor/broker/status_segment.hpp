#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace anchor::broker {

struct StatusSnapshot {
  std::uint64_t pid = 0;
  std::uint64_t port = 0;
  std::uint64_t started_ns = 0;
  std::uint64_t updated_ns = 0;
  std::uint64_t sessions = 0;
  std::uint64_t received = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
};

/// Memory-mapped status block ("ANCB") published by a running broker for
/// out-of-band inspection. The file is the broker's only on-disk artifact.
class StatusSegment {
 public:
  /// Creates or truncates path. Throws Error(IoFailure).
  static StatusSegment create(const std::string& path);
  /// nullopt when the file is missing or not a status segment.
  static std::optional<StatusSnapshot> read(const std::string& path);

  StatusSegment(StatusSegment&& o) noexcept;
  StatusSegment& operator=(StatusSegment&& o) noexcept;
  StatusSegment(const StatusSegment&) = delete;
  StatusSegment& operator=(const StatusSegment&) = delete;
  ~StatusSegment();

  void publish(const StatusSnapshot& s) noexcept;
  /// Unmaps and deletes the file.
  void remove() noexcept;
  const std::string& path() const noexcept { return path_; }

 private:
  StatusSegment(std::string path, void* base) : path_(std::move(path)), base_(base) {}
  void unmap() noexcept;

  std::string path_;
  void* base_ = nullptr;
};

}  // namespace anchor::broker
