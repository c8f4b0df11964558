#include "anchor/broker/routing_table.hpp"

namespace anchor::broker {

void RoutingTable::add(const std::string& node_id, const wire::Subscription& sub) {
  remove(node_id, sub.id);
  forward_[sub.channel_pattern][{node_id, sub.id}] = sub;
  reverse_[node_id][sub.id] = sub.channel_pattern;
  ++count_;
}

bool RoutingTable::remove(const std::string& node_id, wire::SubscriptionId id) {
  auto node = reverse_.find(node_id);
  if (node == reverse_.end()) return false;
  auto sub = node->second.find(id);
  if (sub == node->second.end()) return false;
  auto channel = forward_.find(sub->second);
  if (channel != forward_.end()) {
    channel->second.erase({node_id, id});
    if (channel->second.empty()) forward_.erase(channel);
  }
  node->second.erase(sub);
  if (node->second.empty()) reverse_.erase(node);
  --count_;
  return true;
}

std::size_t RoutingTable::remove_node(const std::string& node_id) {
  auto node = reverse_.find(node_id);
  if (node == reverse_.end()) return 0;
  std::vector<wire::SubscriptionId> ids;
  for (const auto& [id, _] : node->second) ids.push_back(id);
  for (auto id : ids) remove(node_id, id);
  return ids.size();
}

std::vector<RoutingTable::Entry> RoutingTable::candidates(const std::string& channel) const {
  std::vector<Entry> out;
  auto collect = [&](const std::string& pattern) {
    auto it = forward_.find(pattern);
    if (it == forward_.end()) return;
    for (const auto& [key, sub] : it->second) out.push_back({key.first, &sub});
  };
  collect(channel);
  if (channel != "*") collect("*");
  return out;
}

std::vector<wire::Subscription> RoutingTable::subscriptions_of(const std::string& node_id) const {
  std::vector<wire::Subscription> out;
  auto node = reverse_.find(node_id);
  if (node == reverse_.end()) return out;
  for (const auto& [id, pattern] : node->second) {
    auto ch = forward_.find(pattern);
    if (ch == forward_.end()) continue;
    auto s = ch->second.find({node_id, id});
    if (s != ch->second.end()) out.push_back(s->second);
  }
  return out;
}

bool RoutingTable::audit() const {
  std::size_t forward_count = 0;
  for (const auto& [pattern, entries] : forward_) {
    if (entries.empty()) return false;
    for (const auto& [key, sub] : entries) {
      ++forward_count;
      if (sub.id != key.second || sub.channel_pattern != pattern) return false;
      auto node = reverse_.find(key.first);
      if (node == reverse_.end()) return false;
      auto r = node->second.find(key.second);
      if (r == node->second.end() || r->second != pattern) return false;
    }
  }
  std::size_t reverse_count = 0;
  for (const auto& [node, subs] : reverse_) {
    if (subs.empty()) return false;
    reverse_count += subs.size();
  }
  return forward_count == reverse_count && forward_count == count_;
}

}  // namespace anchor::broker
