#include "anchor/gateway/forward_filter.hpp"

#include <functional>

namespace anchor::gateway {

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::Forward: return "forward";
    case Verdict::LocalScope: return "local";
    case Verdict::HopLimit: return "hop-limit";
    case Verdict::NotTarget: return "not-target";
    case Verdict::Duplicate: return "duplicate";
  }
  return "?";
}

std::size_t DedupeWindow::KeyHash::operator()(const Key& k) const noexcept {
  const std::size_t h1 = std::hash<std::string>{}(k.publisher);
  const std::size_t h2 = std::hash<std::string>{}(k.channel);
  const std::size_t h3 = std::hash<std::uint64_t>{}(k.seq);
  return h1 ^ (h2 * 0x9E3779B97F4A7C15ull) ^ (h3 + 0x7F4A7C159E3779B9ull + (h1 << 6));
}

bool DedupeWindow::claim(const wire::MessageEnvelope& e, const std::string& at, const std::string& target) {
  Key key{e.publisher_id, e.topic.channel, e.seq};
  auto it = index_.find(key);
  if (it == index_.end()) {
    lru_.push_front(Node{std::move(key), {}});
    index_.emplace(lru_.front().key, lru_.begin());
    if (index_.size() > capacity_) {
      index_.erase(lru_.back().key);
      lru_.pop_back();
    }
  } else {
    lru_.splice(lru_.begin(), lru_, it->second);
  }
  auto& clusters = lru_.front().clusters;
  clusters.insert(at);
  return clusters.insert(target).second;
}

bool DedupeWindow::contains(const wire::MessageEnvelope& e) const {
  return index_.count(Key{e.publisher_id, e.topic.channel, e.seq}) > 0;
}

Verdict ForwardFilter::offer(const wire::MessageEnvelope& e, const std::string& source, const std::string& target) {
  const auto& region = e.topic.region;
  if (region.kind == wire::Region::Kind::Local) return Verdict::LocalScope;
  if (e.hop_count >= max_hops_) return Verdict::HopLimit;
  if (region.kind == wire::Region::Kind::Named && region.name != target) return Verdict::NotTarget;
  std::lock_guard lock(mu_);
  return window_.claim(e, source, target) ? Verdict::Forward : Verdict::Duplicate;
}

bool ForwardFilter::should_forward(const wire::MessageEnvelope& e) {
  if (e.topic.region.kind == wire::Region::Kind::Local || e.hop_count >= max_hops_) return false;
  std::lock_guard lock(mu_);
  return window_.claim(e, "", "*");
}

wire::MessageEnvelope reinject(const wire::MessageEnvelope& e) {
  wire::MessageEnvelope out = e;
  ++out.hop_count;
  return out;
}

}  // namespace anchor::gateway
