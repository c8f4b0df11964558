#include "anchor/wire/topic.hpp"

#include <array>
#include <vector>

#include "anchor/error.hpp"

namespace anchor::wire {

namespace {

bool token_char(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c == '-';
}

[[noreturn]] void malformed(std::string_view s, const char* why) {
  throw Error(Errc::MalformedTopic, std::string(why) + " in '" + std::string(s) + "'");
}

}  // namespace

bool is_valid_token(std::string_view s) noexcept {
  if (s.empty() || s.size() > kMaxTokenLength) return false;
  for (char c : s) {
    if (!token_char(c)) return false;
  }
  return true;
}

std::string_view region_token(const Region& r) noexcept {
  switch (r.kind) {
    case Region::Kind::Local: return "local";
    case Region::Kind::Global: return "global";
    case Region::Kind::Named: return r.name;
  }
  return {};
}

std::optional<Region> region_from_token(std::string_view token) {
  if (token == "local") return Region::local();
  if (token == "global") return Region::global();
  if (!is_valid_token(token)) return std::nullopt;
  return Region::named(std::string(token));
}

TopicAddress parse_topic(std::string_view s) {
  if (s.empty()) malformed(s, "empty topic");
  if (s.front() != '/') malformed(s, "topic must start with '/'");

  std::vector<std::string_view> segments;
  std::size_t start = 1;
  while (true) {
    const std::size_t slash = s.find('/', start);
    const std::size_t end = slash == std::string_view::npos ? s.size() : slash;
    segments.push_back(s.substr(start, end - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  if (segments.size() != 3 && segments.size() != 4) malformed(s, "expected 3 or 4 segments");
  for (auto seg : segments) {
    if (seg.empty()) malformed(s, "empty segment");
  }

  TopicAddress t;
  if (!is_valid_token(segments[0])) malformed(s, "illegal channel token");
  t.channel = std::string(segments[0]);

  auto region = region_from_token(segments[1]);
  if (!region) malformed(s, "illegal region token");
  t.region = std::move(*region);

  if (segments.size() == 4) {
    if (!is_valid_token(segments[2])) malformed(s, "illegal node id");
    t.node_id = std::string(segments[2]);
  }

  const auto prio = segments.back();
  if (prio.size() != 1 || prio[0] < '0' || prio[0] > '0' + kMaxPrio) malformed(s, "prio must be 0-7");
  t.prio = static_cast<std::uint8_t>(prio[0] - '0');
  return t;
}

std::string format_topic(const TopicAddress& t) {
  std::string out;
  out.reserve(t.channel.size() + 24);
  out += '/';
  out += t.channel;
  out += '/';
  out += region_token(t.region);
  if (t.node_id) {
    out += '/';
    out += *t.node_id;
  }
  out += '/';
  out += static_cast<char>('0' + t.prio);
  return out;
}

bool is_valid_topic(const TopicAddress& t) noexcept {
  if (!is_valid_token(t.channel) || t.prio > kMaxPrio) return false;
  if (t.region.kind == Region::Kind::Named) {
    if (!is_valid_token(t.region.name) || t.region.name == "local" || t.region.name == "global") return false;
  } else if (!t.region.name.empty()) {
    return false;
  }
  return !t.node_id || is_valid_token(*t.node_id);
}

}  // namespace anchor::wire
