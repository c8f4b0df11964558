#include "anchor/wire/frame.hpp"

#include <type_traits>

#include "anchor/error.hpp"

namespace anchor::wire {

bool RegionFilter::matches(const Region& r) const noexcept {
  switch (kind) {
    case Kind::Any: return true;
    case Kind::Local: return r.kind == Region::Kind::Local;
    case Kind::Global: return r.kind == Region::Kind::Global;
    case Kind::Named: return r.kind == Region::Kind::Named && r.name == name;
  }
  return false;
}

void validate_subscription(const Subscription& s) {
  if (s.channel_pattern != "*" && !is_valid_token(s.channel_pattern)) {
    throw Error(Errc::PatternInvalid, "channel pattern '" + s.channel_pattern + "'");
  }
  if (s.region.kind == RegionFilter::Kind::Named) {
    if (!is_valid_token(s.region.name)) throw Error(Errc::PatternInvalid, "region filter '" + s.region.name + "'");
  } else if (!s.region.name.empty()) {
    throw Error(Errc::PatternInvalid, "region filter carries a name without Named kind");
  }
}

FrameTag tag_of(const Frame& f) noexcept {
  return std::visit(
      [](const auto& v) -> FrameTag {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DataFrame>) return FrameTag::Data;
        else if constexpr (std::is_same_v<T, BatchFrame>) return FrameTag::Batch;
        else if constexpr (std::is_same_v<T, RegisterFrame>) return FrameTag::Register;
        else if constexpr (std::is_same_v<T, SubscribeFrame>) return FrameTag::Subscribe;
        else if constexpr (std::is_same_v<T, UnsubscribeFrame>) return FrameTag::Unsubscribe;
        else if constexpr (std::is_same_v<T, HeartbeatFrame>) return FrameTag::Heartbeat;
        else if constexpr (std::is_same_v<T, AckFrame>) return FrameTag::Ack;
        else if constexpr (std::is_same_v<T, StatsRequestFrame>) return FrameTag::StatsRequest;
        else return FrameTag::StatsReply;
      },
      f);
}

namespace {

void put_token(ByteWriter& w, std::string_view s, const char* what) {
  if (s.size() > 255) throw Error(Errc::LengthMismatch, std::string(what) + " exceeds 255 bytes");
  w.token(s);
}

void put_envelope(ByteWriter& w, const MessageEnvelope& e, const Limits& limits) {
  if (e.payload.size() + kFrameHeaderSize > limits.max_frame) {
    throw Error(Errc::FrameTooLarge, "payload of " + std::to_string(e.payload.size()) + " bytes cannot fit a frame");
  }
  if (e.payload.size() > limits.max_payload) {
    throw Error(Errc::PayloadTooLarge, std::to_string(e.payload.size()) + " > " + std::to_string(limits.max_payload));
  }
  put_token(w, e.topic.channel, "channel");
  w.u8(static_cast<std::uint8_t>(e.topic.region.kind));
  if (e.topic.region.kind == Region::Kind::Named) put_token(w, e.topic.region.name, "region");
  w.u8(e.topic.node_id ? 1 : 0);
  if (e.topic.node_id) put_token(w, *e.topic.node_id, "node id");
  w.u8(e.topic.prio);
  put_token(w, e.publisher_id, "publisher id");
  w.u64(e.seq);
  w.u64(e.ts_monotonic_ns);
  w.u8(e.hop_count);
  w.blob(e.payload);
}

void put_body(ByteWriter& w, const Frame& f, const Limits& limits) {
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DataFrame>) {
          put_envelope(w, v.envelope, limits);
        } else if constexpr (std::is_same_v<T, BatchFrame>) {
          if (v.envelopes.empty()) throw Error(Errc::LengthMismatch, "batch must hold at least one envelope");
          w.u32(static_cast<std::uint32_t>(v.envelopes.size()));
          for (const auto& e : v.envelopes) put_envelope(w, e, limits);
        } else if constexpr (std::is_same_v<T, RegisterFrame>) {
          put_token(w, v.identity, "identity");
          w.u16(v.protocol_version);
        } else if constexpr (std::is_same_v<T, SubscribeFrame>) {
          const auto& s = v.subscription;
          w.u64(s.id);
          put_token(w, s.channel_pattern, "channel pattern");
          w.u8(static_cast<std::uint8_t>(s.region.kind));
          if (s.region.kind == RegionFilter::Kind::Named) put_token(w, s.region.name, "region filter");
          w.u8(static_cast<std::uint8_t>(s.directed));
          w.u8(s.allow_self ? 1 : 0);
        } else if constexpr (std::is_same_v<T, UnsubscribeFrame>) {
          w.u64(v.subscription_id);
        } else if constexpr (std::is_same_v<T, HeartbeatFrame>) {
          put_token(w, v.sender_id, "sender id");
          w.u64(v.ts);
        } else if constexpr (std::is_same_v<T, AckFrame>) {
          w.u64(v.ref_seq);
          w.u8(static_cast<std::uint8_t>(v.status));
        } else if constexpr (std::is_same_v<T, StatsRequestFrame>) {
        } else {
          w.u32(static_cast<std::uint32_t>(v.text.size()));
          w.raw(v.text);
        }
      },
      f);
}

[[noreturn]] void body_error(const char* what) { throw Error(Errc::LengthMismatch, what); }

void get_token(ByteReader& r, std::string& out, const char* what) {
  if (!r.token(out)) body_error(what);
}

MessageEnvelope get_envelope(ByteReader& r, const Limits& limits) {
  MessageEnvelope e;
  get_token(r, e.topic.channel, "channel");
  std::uint8_t kind = 0;
  if (!r.u8(kind)) body_error("region kind");
  if (kind > 2) throw Error(Errc::MalformedTopic, "region kind " + std::to_string(kind));
  e.topic.region.kind = static_cast<Region::Kind>(kind);
  if (e.topic.region.kind == Region::Kind::Named) get_token(r, e.topic.region.name, "region");
  std::uint8_t has_node = 0;
  if (!r.u8(has_node)) body_error("node flag");
  if (has_node > 1) throw Error(Errc::MalformedTopic, "node flag");
  if (has_node) {
    std::string node;
    get_token(r, node, "node id");
    e.topic.node_id = std::move(node);
  }
  if (!r.u8(e.topic.prio)) body_error("prio");
  if (!is_valid_topic(e.topic)) throw Error(Errc::MalformedTopic, "invalid topic in envelope");
  get_token(r, e.publisher_id, "publisher id");
  if (!r.u64(e.seq) || !r.u64(e.ts_monotonic_ns) || !r.u8(e.hop_count)) body_error("envelope header");
  if (!r.blob(e.payload)) body_error("payload");
  if (e.payload.size() > limits.max_payload) throw Error(Errc::PayloadTooLarge, "payload");
  return e;
}

Frame get_body(FrameTag tag, ByteReader& r, const Limits& limits) {
  switch (tag) {
    case FrameTag::Data: return DataFrame{get_envelope(r, limits)};
    case FrameTag::Batch: {
      std::uint32_t n = 0;
      if (!r.u32(n)) body_error("batch count");
      if (n == 0) body_error("empty batch");
      BatchFrame b;
      // Each envelope takes at least 30 bytes; guards against absurd counts.
      if (n > r.remaining() / 30 + 1) body_error("batch count exceeds body");
      b.envelopes.reserve(n);
      for (std::uint32_t i = 0; i < n; ++i) b.envelopes.push_back(get_envelope(r, limits));
      return b;
    }
    case FrameTag::Register: {
      RegisterFrame f;
      get_token(r, f.identity, "identity");
      if (!r.u16(f.protocol_version)) body_error("protocol version");
      return f;
    }
    case FrameTag::Subscribe: {
      SubscribeFrame f;
      auto& s = f.subscription;
      if (!r.u64(s.id)) body_error("subscription id");
      get_token(r, s.channel_pattern, "channel pattern");
      std::uint8_t kind = 0;
      if (!r.u8(kind) || kind > 3) body_error("region filter kind");
      s.region.kind = static_cast<RegionFilter::Kind>(kind);
      if (s.region.kind == RegionFilter::Kind::Named) get_token(r, s.region.name, "region filter");
      std::uint8_t directed = 0, allow_self = 0;
      if (!r.u8(directed) || directed > 1) body_error("directed flag");
      if (!r.u8(allow_self) || allow_self > 1) body_error("allow_self flag");
      s.directed = static_cast<DirectedMode>(directed);
      s.allow_self = allow_self != 0;
      return f;
    }
    case FrameTag::Unsubscribe: {
      UnsubscribeFrame f;
      if (!r.u64(f.subscription_id)) body_error("subscription id");
      return f;
    }
    case FrameTag::Heartbeat: {
      HeartbeatFrame f;
      get_token(r, f.sender_id, "sender id");
      if (!r.u64(f.ts)) body_error("heartbeat ts");
      return f;
    }
    case FrameTag::Ack: {
      AckFrame f;
      std::uint8_t status = 0;
      if (!r.u64(f.ref_seq) || !r.u8(status) || status > 3) body_error("ack");
      f.status = static_cast<AckStatus>(status);
      return f;
    }
    case FrameTag::StatsRequest: return StatsRequestFrame{};
    case FrameTag::StatsReply: {
      StatsReplyFrame f;
      if (!r.blob_string(f.text)) body_error("stats text");
      return f;
    }
  }
  throw Error(Errc::UnknownTag, std::to_string(static_cast<int>(tag)));
}

bool known_tag(std::uint8_t t) noexcept { return t >= 0x01 && t <= 0x09; }

}  // namespace

void encode_frame(const Frame& f, Bytes& out, const Limits& limits) {
  const std::size_t start = out.size();
  try {
    ByteWriter w(out);
    w.u8(kMagic0);
    w.u8(kMagic1);
    w.u8(static_cast<std::uint8_t>(tag_of(f)));
    w.u32(0);
    put_body(w, f, limits);
    const std::size_t total = out.size() - start;
    if (total > limits.max_frame) {
      throw Error(Errc::FrameTooLarge, std::to_string(total) + " > " + std::to_string(limits.max_frame));
    }
    w.patch_u32(start + 3, static_cast<std::uint32_t>(total - kFrameHeaderSize));
  } catch (...) {
    out.resize(start);
    throw;
  }
}

Bytes encode_frame(const Frame& f, const Limits& limits) {
  Bytes out;
  encode_frame(f, out, limits);
  return out;
}

void encode_envelope(const MessageEnvelope& e, Bytes& out, const Limits& limits) {
  const std::size_t start = out.size();
  try {
    ByteWriter w(out);
    put_envelope(w, e, limits);
  } catch (...) {
    out.resize(start);
    throw;
  }
}

Bytes assemble_envelope_frame(const std::vector<ByteView>& encoded, const Limits& limits) {
  if (encoded.empty()) throw Error(Errc::LengthMismatch, "no envelopes to frame");
  std::size_t total = kFrameHeaderSize + (encoded.size() > 1 ? 4 : 0);
  for (const auto& e : encoded) total += e.size();
  if (total > limits.max_frame) {
    throw Error(Errc::FrameTooLarge, std::to_string(total) + " > " + std::to_string(limits.max_frame));
  }
  Bytes out;
  out.reserve(total);
  ByteWriter w(out);
  w.u8(kMagic0);
  w.u8(kMagic1);
  w.u8(static_cast<std::uint8_t>(encoded.size() > 1 ? FrameTag::Batch : FrameTag::Data));
  w.u32(static_cast<std::uint32_t>(total - kFrameHeaderSize));
  if (encoded.size() > 1) w.u32(static_cast<std::uint32_t>(encoded.size()));
  for (const auto& e : encoded) w.raw(e);
  return out;
}

DecodeResult decode_frame(ByteView b, const Limits& limits) {
  DecodeResult res;
  // Check magic bytes as soon as they arrive so garbage is rejected early.
  if (!b.empty() && b[0] != kMagic0) throw Error(Errc::BadMagic, "first byte");
  if (b.size() >= 2 && b[1] != kMagic1) throw Error(Errc::BadMagic, "second byte");
  if (b.size() >= 3 && !known_tag(b[2])) throw Error(Errc::UnknownTag, std::to_string(b[2]));
  if (b.size() < kFrameHeaderSize) {
    res.bytes_needed = kFrameHeaderSize - b.size();
    return res;
  }
  const std::uint32_t body_len = static_cast<std::uint32_t>(b[3]) | (static_cast<std::uint32_t>(b[4]) << 8) |
                                 (static_cast<std::uint32_t>(b[5]) << 16) |
                                 (static_cast<std::uint32_t>(b[6]) << 24);
  if (kFrameHeaderSize + static_cast<std::size_t>(body_len) > limits.max_frame) {
    throw Error(Errc::FrameTooLarge, "declared body length " + std::to_string(body_len));
  }
  const std::size_t total = kFrameHeaderSize + body_len;
  if (b.size() < total) {
    res.bytes_needed = total - b.size();
    return res;
  }
  ByteReader r(b.subspan(kFrameHeaderSize, body_len));
  Frame f = get_body(static_cast<FrameTag>(b[2]), r, limits);
  if (!r.ok() || r.remaining() != 0) throw Error(Errc::LengthMismatch, "body length does not match content");
  res.frame = std::move(f);
  res.consumed = total;
  return res;
}

std::optional<Frame> FrameDecoder::next() {
  auto res = decode_frame(ByteView(buffer_).subspan(read_pos_), limits_);
  if (!res.frame) {
    if (read_pos_ > 0 && read_pos_ * 2 >= buffer_.size()) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(read_pos_));
      read_pos_ = 0;
    }
    return std::nullopt;
  }
  read_pos_ += res.consumed;
  if (read_pos_ == buffer_.size()) {
    buffer_.clear();
    read_pos_ = 0;
  }
  return std::move(res.frame);
}

}  // namespace anchor::wire
