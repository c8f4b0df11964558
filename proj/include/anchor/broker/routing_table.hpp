#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "anchor/wire/frame.hpp"

namespace anchor::broker {

/// Channel pattern -> (node, subscription), with a reverse index per node.
class RoutingTable {
 public:
  struct Entry {
    std::string node_id;
    const wire::Subscription* subscription;
  };

  /// Inserts or replaces the node's subscription with the same id.
  void add(const std::string& node_id, const wire::Subscription& sub);
  bool remove(const std::string& node_id, wire::SubscriptionId id);
  /// Returns the number of subscriptions removed.
  std::size_t remove_node(const std::string& node_id);

  /// Subscriptions whose channel pattern can match channel (exact or "*").
  std::vector<Entry> candidates(const std::string& channel) const;
  std::vector<wire::Subscription> subscriptions_of(const std::string& node_id) const;

  std::size_t size() const noexcept { return count_; }
  std::size_t node_count() const noexcept { return reverse_.size(); }

  /// True when the forward and reverse indices describe the same set.
  bool audit() const;

 private:
  using Key = std::pair<std::string, wire::SubscriptionId>;
  std::map<std::string, std::map<Key, wire::Subscription>> forward_;
  std::map<std::string, std::map<wire::SubscriptionId, std::string>> reverse_;
  std::size_t count_ = 0;
};

}  // namespace anchor::broker
