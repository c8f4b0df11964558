#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace anchor::wire {

constexpr std::size_t kMaxTokenLength = 64;
constexpr std::uint8_t kMaxPrio = 7;

/// Tokens are 1..64 characters from [A-Za-z0-9_-].
bool is_valid_token(std::string_view s) noexcept;

/// Dissemination scope of a topic. "local" stays in the publishing cluster,
/// "global" crosses every gateway link, any other token names a target cluster.
struct Region {
  enum class Kind : std::uint8_t { Local = 0, Global = 1, Named = 2 };

  Kind kind = Kind::Local;
  std::string name;  // set only for Named

  static Region local() { return {Kind::Local, {}}; }
  static Region global() { return {Kind::Global, {}}; }
  static Region named(std::string n) { return {Kind::Named, std::move(n)}; }

  friend bool operator==(const Region&, const Region&) = default;
};

std::string_view region_token(const Region& r) noexcept;
/// Returns nullopt when the token is not a valid region token.
std::optional<Region> region_from_token(std::string_view token);

/// Parsed "/channel/region/(nodeId)/prio".
struct TopicAddress {
  std::string channel;
  Region region;
  std::optional<std::string> node_id;
  std::uint8_t prio = 0;

  friend bool operator==(const TopicAddress&, const TopicAddress&) = default;
};

/// Throws Error(MalformedTopic).
TopicAddress parse_topic(std::string_view s);
std::string format_topic(const TopicAddress& t);
bool is_valid_topic(const TopicAddress& t) noexcept;

}  // namespace anchor::wire
