#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace anchor::wire {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Little-endian appender over a growable buffer.
class ByteWriter {
 public:
  explicit ByteWriter(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void raw(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  /// u8 length prefix; caller guarantees s.size() <= 255.
  void token(std::string_view s) {
    u8(static_cast<std::uint8_t>(s.size()));
    raw(s);
  }
  void blob(ByteView b) {
    u32(static_cast<std::uint32_t>(b.size()));
    raw(b);
  }

  std::size_t size() const noexcept { return out_.size(); }
  void patch_u32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes& out_;
};

/// Bounds-checked little-endian reader. Every accessor returns false on underrun
/// and leaves the reader in a failed state.
class ByteReader {
 public:
  explicit ByteReader(ByteView in) : in_(in) {}

  bool u8(std::uint8_t& v) { return get_le(v); }
  bool u16(std::uint16_t& v) { return get_le(v); }
  bool u32(std::uint32_t& v) { return get_le(v); }
  bool u64(std::uint64_t& v) { return get_le(v); }

  bool token(std::string& s) {
    std::uint8_t n = 0;
    if (!u8(n)) return false;
    return take_string(n, s);
  }
  bool blob(Bytes& b) {
    std::uint32_t n = 0;
    if (!u32(n)) return false;
    if (remaining() < n) return fail();
    b.assign(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return true;
  }
  bool blob_string(std::string& s) {
    std::uint32_t n = 0;
    if (!u32(n)) return false;
    return take_string(n, s);
  }

  std::size_t remaining() const noexcept { return failed_ ? 0 : in_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }
  bool ok() const noexcept { return !failed_; }

 private:
  bool fail() {
    failed_ = true;
    return false;
  }
  bool take_string(std::size_t n, std::string& s) {
    if (remaining() < n) return fail();
    s.assign(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return true;
  }
  template <typename T>
  bool get_le(T& v) {
    if (remaining() < sizeof(T)) return fail();
    T r = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) r |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    v = r;
    return true;
  }

  ByteView in_;
  std::size_t pos_ = 0;
  bool failed_ = false;
};

}  // namespace anchor::wire
