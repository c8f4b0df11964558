#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "anchor/records/schema.hpp"
#include "anchor/wire/bytes.hpp"

namespace anchor::records {

enum class LogKind : std::uint8_t {
  RecordWrite = 1,
  Command = 2,
  Event = 3,
  Observation = 4,  // normalized producer input, kept for aggregate audits
};

struct ReplayLogEntry {
  std::uint64_t ts_monotonic_ns = 0;
  LogKind kind = LogKind::Event;
  wire::Bytes body;

  friend bool operator==(const ReplayLogEntry&, const ReplayLogEntry&) = default;
};

struct LogOptions {
  /// write(2) every entry as soon as it is appended; otherwise buffer up to
  /// flush_threshold bytes.
  bool flush_each = true;
  std::size_t flush_threshold = 64 * 1024;
  /// fdatasync after each flush.
  bool sync = false;
};

/// Append-only writer for the "ANCL" log format. Opening an existing log
/// truncates any uncommitted or torn tail.
class ReplayLogWriter {
 public:
  static ReplayLogWriter open(const std::string& path, LogOptions options = {});

  ReplayLogWriter(ReplayLogWriter&&) noexcept;
  ReplayLogWriter& operator=(ReplayLogWriter&&) noexcept;
  ReplayLogWriter(const ReplayLogWriter&) = delete;
  ReplayLogWriter& operator=(const ReplayLogWriter&) = delete;
  ~ReplayLogWriter();

  /// Timestamps are forced strictly increasing within the file. Returns the
  /// timestamp actually stored.
  std::uint64_t append(const ReplayLogEntry& entry);
  std::uint64_t append(LogKind kind, wire::ByteView body, std::uint64_t ts_monotonic_ns);
  void flush();

  const std::string& path() const noexcept { return path_; }
  std::uint64_t entries_written() const noexcept { return entries_; }

 private:
  ReplayLogWriter(int fd, std::string path, LogOptions options, std::uint64_t end, std::uint64_t last_ts);
  void write_pending();

  int fd_ = -1;
  std::string path_;
  LogOptions options_;
  std::uint64_t end_ = 0;
  std::uint64_t last_ts_ = 0;
  std::uint64_t entries_ = 0;
  wire::Bytes pending_;
  std::vector<std::pair<std::size_t, std::uint32_t>> pending_len_fixups_;
  std::uint64_t pending_at_ = 0;
};

struct ReplayResult {
  std::vector<ReplayLogEntry> entries;
  bool corrupt_tail = false;
  std::string warning;
  std::uint64_t valid_bytes = 0;  // offset just past the last valid entry
};

/// Reads every committed entry in append order. A torn or uncommitted final
/// entry is skipped and reported through corrupt_tail. Throws Error(IoFailure)
/// for unreadable files, Error(BadMagic) for foreign files, Error(LogCorrupt)
/// for damage before the tail.
ReplayResult replay_log(const std::string& path);

// Body codecs for RecordWrite entries.
struct RecordWriteBody {
  std::string group;
  GroupValues values;
  std::uint64_t version_counter = 0;

  friend bool operator==(const RecordWriteBody&, const RecordWriteBody&) = default;
};
wire::Bytes encode_record_write(const RecordWriteBody& w);
RecordWriteBody decode_record_write(wire::ByteView body);

}  // namespace anchor::records
