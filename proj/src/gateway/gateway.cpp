#include "anchor/gateway/gateway.hpp"

#include <set>

#include <spdlog/spdlog.h>

#include "anchor/error.hpp"

namespace anchor::gateway {

GatewayConfig GatewayConfig::from(const Config& cfg) {
  GatewayConfig g;
  g.gateway_id = cfg.get_string("gateway", "id", g.gateway_id);
  g.dedupe_window = static_cast<std::size_t>(cfg.get_int("gateway", "dedupe_window", 65536));
  g.max_hops = static_cast<std::uint8_t>(cfg.get_int("gateway", "max_hops", 4));
  g.queue_capacity = static_cast<std::size_t>(cfg.get_int("gateway", "queue_capacity", 4096));
  if (auto ch = cfg.get_list("gateway", "channels"); !ch.empty()) g.channels = ch;
  g.client_template = client::ClientOptions::from(cfg, "gateway");
  for (const auto& name : cfg.sections_with_prefix("cluster.")) {
    g.clusters.push_back({name, net::Endpoint::parse(cfg.require_string("cluster." + name, "endpoint"))});
  }
  for (const auto& name : cfg.sections_with_prefix("link.")) {
    g.links.push_back({cfg.require_string("link." + name, "source"), cfg.require_string("link." + name, "target")});
  }
  g.validate();
  return g;
}

void GatewayConfig::validate() const {
  if (!wire::is_valid_token(gateway_id)) throw Error(Errc::ConfigError, "gateway id '" + gateway_id + "'");
  if (dedupe_window == 0) throw Error(Errc::ConfigError, "dedupe_window must be positive");
  if (max_hops == 0) throw Error(Errc::ConfigError, "max_hops must be positive");
  std::set<std::string> names;
  for (const auto& c : clusters) {
    if (!wire::is_valid_token(c.name)) throw Error(Errc::ConfigError, "cluster name '" + c.name + "'");
    if (!names.insert(c.name).second) throw Error(Errc::ConfigError, "duplicate cluster '" + c.name + "'");
  }
  if (links.empty()) throw Error(Errc::ConfigError, "no links configured");
  for (const auto& l : links) {
    if (!names.count(l.source) || !names.count(l.target)) {
      throw Error(Errc::ConfigError, "link " + l.source + "->" + l.target + " names an unknown cluster");
    }
    if (l.source == l.target) throw Error(Errc::ConfigError, "link from " + l.source + " to itself");
  }
  for (const auto& ch : channels) {
    if (ch != "*" && !wire::is_valid_token(ch)) throw Error(Errc::ConfigError, "channel '" + ch + "'");
  }
}

Gateway::Gateway(GatewayConfig config) : config_(std::move(config)), filter_(config_.dedupe_window, config_.max_hops) {
  config_.validate();
  for (const auto& l : config_.links) targets_[l.source].push_back(l.target);

  for (const auto& c : config_.clusters) {
    auto opts = config_.client_template;
    opts.endpoint = c.endpoint;
    opts.node_id = config_.gateway_id;
    opts.send_queue_capacity = config_.queue_capacity;
    clients_[c.name] = std::make_unique<client::Client>(opts);
  }
  for (const auto& [source, targets] : targets_) {
    auto& cl = *clients_.at(source);
    std::vector<wire::RegionFilter> filters{{wire::RegionFilter::Kind::Global, ""}};
    for (const auto& t : targets) filters.push_back({wire::RegionFilter::Kind::Named, t});
    for (const auto& ch : config_.channels) {
      for (const auto& f : filters) {
        wire::Subscription sub;
        sub.channel_pattern = ch;
        sub.region = f;
        const std::string src = source;
        cl.subscribe(sub, [this, src](const wire::MessageEnvelope& e) { handle(e, src); });
      }
    }
  }
}

Gateway::~Gateway() { stop(); }

void Gateway::stop() {
  for (auto& [name, c] : clients_) c->stop();
}

bool Gateway::wait_ready(std::chrono::milliseconds timeout) const {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (const auto& [name, c] : clients_) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0 || !c->wait_registered(left)) return false;
  }
  return true;
}

void Gateway::handle(const wire::MessageEnvelope& e, const std::string& source) {
  ++observed_;
  auto it = targets_.find(source);
  if (it == targets_.end()) return;
  for (const auto& target : it->second) {
    switch (filter_.offer(e, source, target)) {
      case Verdict::Forward: {
        auto out = reinject(e);
        if (clients_.at(target)->forward(out) == client::PublishResult::DroppedLocal) ++dropped_;
        ++forwarded_;
        handle(out, target);
        break;
      }
      case Verdict::LocalScope: ++local_; break;
      case Verdict::HopLimit: ++hops_; break;
      case Verdict::NotTarget: ++not_target_; break;
      case Verdict::Duplicate: ++dup_; break;
    }
  }
}

GatewayStats Gateway::stats() const {
  return GatewayStats{observed_.load(), forwarded_.load(), local_.load(),   hops_.load(),
                      not_target_.load(), dup_.load(),    dropped_.load()};
}

}  // namespace anchor::gateway
