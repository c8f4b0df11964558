#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "anchor/wire/bytes.hpp"
#include "anchor/wire/topic.hpp"

namespace anchor::wire {

constexpr std::uint16_t kProtocolVersion = 1;

struct Limits {
  std::size_t max_payload = 1u << 20;  // 1 MiB
  std::size_t max_frame = 4u << 20;    // 4 MiB
  std::uint8_t max_hops = 4;
};

/// One bus message. Commands and status events share this envelope.
struct MessageEnvelope {
  TopicAddress topic;
  std::string publisher_id;
  std::uint64_t seq = 0;
  std::uint64_t ts_monotonic_ns = 0;
  std::uint8_t hop_count = 0;
  Bytes payload;

  friend bool operator==(const MessageEnvelope&, const MessageEnvelope&) = default;
};

/// Region side of a subscription pattern.
struct RegionFilter {
  enum class Kind : std::uint8_t { Any = 0, Local = 1, Global = 2, Named = 3 };
  Kind kind = Kind::Any;
  std::string name;

  bool matches(const Region& r) const noexcept;
  friend bool operator==(const RegionFilter&, const RegionFilter&) = default;
};

enum class DirectedMode : std::uint8_t {
  Any = 0,           // broadcast topics plus topics directed at this node
  OnlyDirected = 1,  // only topics whose node_id equals the subscriber
};

using SubscriptionId = std::uint64_t;

struct Subscription {
  SubscriptionId id = 0;
  std::string channel_pattern;  // token or "*"
  RegionFilter region;
  DirectedMode directed = DirectedMode::Any;
  bool allow_self = false;

  friend bool operator==(const Subscription&, const Subscription&) = default;
};

/// Throws Error(PatternInvalid).
void validate_subscription(const Subscription& s);

enum class AckStatus : std::uint8_t {
  Ok = 0,
  VersionMismatch = 1,
  PatternInvalid = 2,
  NotRegistered = 3,
};

struct DataFrame {
  MessageEnvelope envelope;
  friend bool operator==(const DataFrame&, const DataFrame&) = default;
};
struct BatchFrame {
  std::vector<MessageEnvelope> envelopes;
  friend bool operator==(const BatchFrame&, const BatchFrame&) = default;
};
struct RegisterFrame {
  std::string identity;
  std::uint16_t protocol_version = kProtocolVersion;
  friend bool operator==(const RegisterFrame&, const RegisterFrame&) = default;
};
struct SubscribeFrame {
  Subscription subscription;
  friend bool operator==(const SubscribeFrame&, const SubscribeFrame&) = default;
};
struct UnsubscribeFrame {
  SubscriptionId subscription_id = 0;
  friend bool operator==(const UnsubscribeFrame&, const UnsubscribeFrame&) = default;
};
struct HeartbeatFrame {
  std::string sender_id;
  std::uint64_t ts = 0;
  friend bool operator==(const HeartbeatFrame&, const HeartbeatFrame&) = default;
};
/// ref_seq 0 acknowledges Register; otherwise it names a subscription id.
struct AckFrame {
  std::uint64_t ref_seq = 0;
  AckStatus status = AckStatus::Ok;
  friend bool operator==(const AckFrame&, const AckFrame&) = default;
};
struct StatsRequestFrame {
  friend bool operator==(const StatsRequestFrame&, const StatsRequestFrame&) = default;
};
/// JSON lines.
struct StatsReplyFrame {
  std::string text;
  friend bool operator==(const StatsReplyFrame&, const StatsReplyFrame&) = default;
};

using Frame = std::variant<DataFrame, BatchFrame, RegisterFrame, SubscribeFrame, UnsubscribeFrame,
                           HeartbeatFrame, AckFrame, StatsRequestFrame, StatsReplyFrame>;

enum class FrameTag : std::uint8_t {
  Data = 0x01,
  Batch = 0x02,
  Register = 0x03,
  Subscribe = 0x04,
  Unsubscribe = 0x05,
  Heartbeat = 0x06,
  Ack = 0x07,
  StatsRequest = 0x08,
  StatsReply = 0x09,
};

constexpr std::uint8_t kMagic0 = 0xA7;
constexpr std::uint8_t kMagic1 = 0x4E;
constexpr std::size_t kFrameHeaderSize = 7;  // magic(2) tag(1) body_len(4)

FrameTag tag_of(const Frame& f) noexcept;

/// Appends the encoding of f to out. Throws Error(FrameTooLarge) when the
/// encoded frame would exceed limits.max_frame, Error(PayloadTooLarge) for an
/// oversized envelope payload; out is left unchanged on error.
void encode_frame(const Frame& f, Bytes& out, const Limits& limits = {});
Bytes encode_frame(const Frame& f, const Limits& limits = {});

/// Envelope body encoding as it appears inside Data and Batch frames. Lets a
/// broker encode a fanned-out message once and reuse the bytes per subscriber.
void encode_envelope(const MessageEnvelope& e, Bytes& out, const Limits& limits = {});
/// Frame from pre-encoded envelopes: Data for one, Batch for several.
/// Throws Error(FrameTooLarge).
Bytes assemble_envelope_frame(const std::vector<ByteView>& encoded, const Limits& limits = {});
/// Frame bytes besides the envelopes themselves: header, plus batch count.
constexpr std::size_t kBatchOverhead = kFrameHeaderSize + 4;

struct DecodeResult {
  std::optional<Frame> frame;     // empty => truncated
  std::size_t consumed = 0;       // bytes of input used by frame
  std::size_t bytes_needed = 0;   // when truncated, minimum additional bytes
};

/// Decodes one frame from the front of b. A truncated prefix is reported via an
/// empty frame and bytes_needed > 0. Throws Error(BadMagic | UnknownTag |
/// LengthMismatch | FrameTooLarge).
DecodeResult decode_frame(ByteView b, const Limits& limits = {});

/// Accumulates a byte stream and yields complete frames.
class FrameDecoder {
 public:
  explicit FrameDecoder(Limits limits = {}) : limits_(limits) {}

  void feed(ByteView chunk) { buffer_.insert(buffer_.end(), chunk.begin(), chunk.end()); }
  /// Next complete frame, or nullopt when more bytes are needed. Throws on corruption.
  std::optional<Frame> next();
  std::size_t buffered() const noexcept { return buffer_.size() - read_pos_; }
  void reset() {
    buffer_.clear();
    read_pos_ = 0;
  }

 private:
  Limits limits_;
  Bytes buffer_;
  std::size_t read_pos_ = 0;
};

}  // namespace anchor::wire
