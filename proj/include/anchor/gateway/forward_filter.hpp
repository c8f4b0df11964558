#pragma once

#include <cstdint>
#include <list>
#include <mutex>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>

#include "anchor/wire/frame.hpp"

namespace anchor::gateway {

enum class Verdict {
  Forward,
  LocalScope,   // region is local
  HopLimit,     // hop_count >= max_hops
  NotTarget,    // named region that is not the link's target
  Duplicate,    // already present in the target cluster
};

std::string_view to_string(Verdict v) noexcept;

/// Bounded LRU over (publisher_id, channel, seq). Each entry records the
/// clusters the message is known to have reached, so one window shared by all
/// links also stops a message from being carried back where it came from.
class DedupeWindow {
 public:
  explicit DedupeWindow(std::size_t capacity) : capacity_(capacity) {}

  /// Records that e is present in cluster `at`, then claims `target`.
  /// True when target was not yet claimed (the caller should forward).
  bool claim(const wire::MessageEnvelope& e, const std::string& at, const std::string& target);
  bool contains(const wire::MessageEnvelope& e) const;
  std::size_t size() const noexcept { return index_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  struct Key {
    std::string publisher;
    std::string channel;
    std::uint64_t seq;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  struct Node {
    Key key;
    std::set<std::string> clusters;
  };

  std::size_t capacity_;
  std::list<Node> lru_;  // front = most recent
  std::unordered_map<Key, std::list<Node>::iterator, KeyHash> index_;
};

/// Forwarding decision for gateway links. Thread-safe.
class ForwardFilter {
 public:
  ForwardFilter(std::size_t window_capacity, std::uint8_t max_hops) : window_(window_capacity), max_hops_(max_hops) {}

  /// Decision for carrying e, observed in cluster `source`, over the link to
  /// `target`. A Forward verdict claims the triple for target.
  Verdict offer(const wire::MessageEnvelope& e, const std::string& source, const std::string& target);

  /// Single-link form: region not local, hop below the limit, triple unseen.
  bool should_forward(const wire::MessageEnvelope& e);

  std::uint8_t max_hops() const noexcept { return max_hops_; }

 private:
  std::mutex mu_;
  DedupeWindow window_;
  std::uint8_t max_hops_;
};

/// Copy of e as it is injected into the target cluster.
wire::MessageEnvelope reinject(const wire::MessageEnvelope& e);

}  // namespace anchor::gateway
