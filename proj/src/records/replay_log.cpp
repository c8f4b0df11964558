#include "anchor/records/replay_log.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <spdlog/spdlog.h>

#include "anchor/error.hpp"

namespace anchor::records {

namespace {

constexpr char kLogMagic[4] = {'A', 'N', 'C', 'L'};
constexpr std::uint32_t kLogFormatVersion = 1;
constexpr std::size_t kFileHeader = 8;
// len(4) crc(4) kind(1) ts(8)
constexpr std::size_t kEntryHeader = 17;

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

void pwrite_all(int fd, const void* data, std::size_t n, std::uint64_t at) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  while (n > 0) {
    const ssize_t w = ::pwrite(fd, p, n, static_cast<off_t>(at));
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::IoFailure, errno_text("log write"));
    }
    p += w;
    n -= static_cast<std::size_t>(w);
    at += static_cast<std::uint64_t>(w);
  }
}

wire::Bytes read_file(const std::string& path) {
  const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) throw Error(Errc::IoFailure, errno_text("open " + path));
  wire::Bytes data;
  std::uint8_t buf[65536];
  while (true) {
    const ssize_t r = ::read(fd, buf, sizeof buf);
    if (r < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw Error(Errc::IoFailure, errno_text("read " + path));
    }
    if (r == 0) break;
    data.insert(data.end(), buf, buf + r);
  }
  ::close(fd);
  return data;
}

ReplayResult parse_log(const wire::Bytes& data, const std::string& path) {
  if (data.size() < kFileHeader || std::memcmp(data.data(), kLogMagic, 4) != 0) {
    throw Error(Errc::BadMagic, path + " is not a replay log");
  }
  if (get_u32(data.data() + 4) != kLogFormatVersion) {
    throw Error(Errc::VersionUnsupported, path + " log format " + std::to_string(get_u32(data.data() + 4)));
  }
  ReplayResult out;
  std::size_t at = kFileHeader;
  out.valid_bytes = at;
  while (at < data.size()) {
    const std::size_t left = data.size() - at;
    auto tail = [&](const std::string& why) {
      out.corrupt_tail = true;
      out.warning = "CorruptTail at offset " + std::to_string(at) + ": " + why;
    };
    if (left < kEntryHeader) {
      tail("partial entry header");
      break;
    }
    const std::uint32_t len = get_u32(data.data() + at);
    const std::uint32_t crc = get_u32(data.data() + at + 4);
    if (len == 0) {
      tail("uncommitted entry");
      break;
    }
    if (len < kEntryHeader - 8 || len > left - 8) {
      tail("entry length exceeds file");
      break;
    }
    const std::uint8_t* content = data.data() + at + 8;
    const auto actual = static_cast<std::uint32_t>(::crc32(0L, content, len));
    if (actual != crc) {
      if (at + 8 + len == data.size()) {
        tail("checksum mismatch in final entry");
        break;
      }
      throw Error(Errc::LogCorrupt, path + ": checksum mismatch at offset " + std::to_string(at));
    }
    ReplayLogEntry e;
    e.kind = static_cast<LogKind>(content[0]);
    e.ts_monotonic_ns = get_u64(content + 1);
    e.body.assign(content + 9, content + len);
    out.entries.push_back(std::move(e));
    at += 8 + len;
    out.valid_bytes = at;
  }
  return out;
}

}  // namespace

ReplayLogWriter ReplayLogWriter::open(const std::string& path, LogOptions options) {
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::IoFailure, errno_text("open " + path));
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    throw Error(Errc::IoFailure, errno_text("stat " + path));
  }
  std::uint64_t end = kFileHeader;
  std::uint64_t last_ts = 0;
  try {
    if (st.st_size == 0) {
      std::uint8_t header[kFileHeader];
      std::memcpy(header, kLogMagic, 4);
      for (int i = 0; i < 4; ++i) header[4 + i] = static_cast<std::uint8_t>(kLogFormatVersion >> (8 * i));
      pwrite_all(fd, header, sizeof header, 0);
    } else {
      auto parsed = parse_log(read_file(path), path);
      if (parsed.corrupt_tail) {
        spdlog::warn("{}: truncating torn tail ({})", path, parsed.warning);
        if (::ftruncate(fd, static_cast<off_t>(parsed.valid_bytes)) != 0) {
          throw Error(Errc::IoFailure, errno_text("truncate " + path));
        }
      }
      end = parsed.valid_bytes;
      if (!parsed.entries.empty()) last_ts = parsed.entries.back().ts_monotonic_ns;
    }
  } catch (...) {
    ::close(fd);
    throw;
  }
  return ReplayLogWriter(fd, path, options, end, last_ts);
}

ReplayLogWriter::ReplayLogWriter(int fd, std::string path, LogOptions options, std::uint64_t end,
                                 std::uint64_t last_ts)
    : fd_(fd), path_(std::move(path)), options_(options), end_(end), last_ts_(last_ts), pending_at_(end) {}

ReplayLogWriter::ReplayLogWriter(ReplayLogWriter&& o) noexcept
    : fd_(std::exchange(o.fd_, -1)),
      path_(std::move(o.path_)),
      options_(o.options_),
      end_(o.end_),
      last_ts_(o.last_ts_),
      entries_(o.entries_),
      pending_(std::move(o.pending_)),
      pending_len_fixups_(std::move(o.pending_len_fixups_)),
      pending_at_(o.pending_at_) {}

ReplayLogWriter& ReplayLogWriter::operator=(ReplayLogWriter&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) {
      try {
        flush();
      } catch (...) {
      }
      ::close(fd_);
    }
    fd_ = std::exchange(o.fd_, -1);
    path_ = std::move(o.path_);
    options_ = o.options_;
    end_ = o.end_;
    last_ts_ = o.last_ts_;
    entries_ = o.entries_;
    pending_ = std::move(o.pending_);
    pending_len_fixups_ = std::move(o.pending_len_fixups_);
    pending_at_ = o.pending_at_;
  }
  return *this;
}

ReplayLogWriter::~ReplayLogWriter() {
  if (fd_ < 0) return;
  try {
    flush();
  } catch (const std::exception& e) {
    spdlog::error("{}: flush on close failed: {}", path_, e.what());
  }
  ::close(fd_);
}

std::uint64_t ReplayLogWriter::append(const ReplayLogEntry& entry) {
  return append(entry.kind, entry.body, entry.ts_monotonic_ns);
}

std::uint64_t ReplayLogWriter::append(LogKind kind, wire::ByteView body, std::uint64_t ts) {
  if (ts <= last_ts_) ts = last_ts_ + 1;
  wire::Bytes content;
  content.reserve(9 + body.size());
  wire::ByteWriter w(content);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u64(ts);
  w.raw(body);
  const auto crc = static_cast<std::uint32_t>(::crc32(0L, content.data(), static_cast<uInt>(content.size())));

  // Staged with a zero length; the length is committed once the content is in place.
  wire::ByteWriter p(pending_);
  const std::size_t len_at = pending_.size();
  p.u32(0);
  p.u32(crc);
  p.raw(content);
  pending_len_fixups_.push_back({len_at, static_cast<std::uint32_t>(content.size())});

  last_ts_ = ts;
  ++entries_;
  if (options_.flush_each || pending_.size() >= options_.flush_threshold) write_pending();
  return ts;
}

void ReplayLogWriter::flush() {
  if (!pending_.empty()) write_pending();
}

void ReplayLogWriter::write_pending() {
  if (pending_.empty()) return;
  pwrite_all(fd_, pending_.data(), pending_.size(), pending_at_);
  if (options_.sync) ::fdatasync(fd_);
  for (const auto& [rel, len] : pending_len_fixups_) {
    std::uint8_t le[4];
    for (int i = 0; i < 4; ++i) le[i] = static_cast<std::uint8_t>(len >> (8 * i));
    pwrite_all(fd_, le, 4, pending_at_ + rel);
  }
  if (options_.sync) ::fdatasync(fd_);
  end_ = pending_at_ + pending_.size();
  pending_at_ = end_;
  pending_.clear();
  pending_len_fixups_.clear();
}

ReplayResult replay_log(const std::string& path) {
  auto result = parse_log(read_file(path), path);
  if (result.corrupt_tail) spdlog::warn("{}: {}", path, result.warning);
  return result;
}

wire::Bytes encode_record_write(const RecordWriteBody& w) {
  wire::Bytes out;
  wire::ByteWriter bw(out);
  bw.token(w.group);
  bw.u64(w.version_counter);
  std::visit(
      [&](const auto& vec) {
        using V = std::decay_t<decltype(vec)>;
        if constexpr (std::is_same_v<V, std::vector<std::int64_t>>) {
          bw.u8(static_cast<std::uint8_t>(ElementType::I64));
          bw.u32(static_cast<std::uint32_t>(vec.size()));
          for (auto v : vec) bw.u64(static_cast<std::uint64_t>(v));
        } else if constexpr (std::is_same_v<V, std::vector<double>>) {
          bw.u8(static_cast<std::uint8_t>(ElementType::F64));
          bw.u32(static_cast<std::uint32_t>(vec.size()));
          for (auto v : vec) bw.u64(std::bit_cast<std::uint64_t>(v));
        } else {
          bw.u8(static_cast<std::uint8_t>(ElementType::Bytes));
          bw.u32(static_cast<std::uint32_t>(vec.size()));
          for (const auto& s : vec) {
            bw.u32(static_cast<std::uint32_t>(s.size()));
            bw.raw(s);
          }
        }
      },
      w.values);
  return out;
}

RecordWriteBody decode_record_write(wire::ByteView body) {
  wire::ByteReader r(body);
  RecordWriteBody w;
  std::uint8_t type = 0;
  std::uint32_t n = 0;
  if (!r.token(w.group) || !r.u64(w.version_counter) || !r.u8(type) || !r.u32(n)) {
    throw Error(Errc::LogCorrupt, "record write header");
  }
  if (n > r.remaining()) throw Error(Errc::LogCorrupt, "record write count");
  switch (static_cast<ElementType>(type)) {
    case ElementType::I64: {
      std::vector<std::int64_t> v(n);
      for (auto& x : v) {
        std::uint64_t u = 0;
        if (!r.u64(u)) throw Error(Errc::LogCorrupt, "record write value");
        x = static_cast<std::int64_t>(u);
      }
      w.values = std::move(v);
      break;
    }
    case ElementType::F64: {
      std::vector<double> v(n);
      for (auto& x : v) {
        std::uint64_t u = 0;
        if (!r.u64(u)) throw Error(Errc::LogCorrupt, "record write value");
        x = std::bit_cast<double>(u);
      }
      w.values = std::move(v);
      break;
    }
    case ElementType::Bytes: {
      std::vector<std::string> v(n);
      for (auto& s : v) {
        if (!r.blob_string(s)) throw Error(Errc::LogCorrupt, "record write value");
      }
      w.values = std::move(v);
      break;
    }
    default: throw Error(Errc::LogCorrupt, "record write element type");
  }
  if (r.remaining() != 0) throw Error(Errc::LogCorrupt, "record write trailing bytes");
  return w;
}

}  // namespace anchor::records
