#include "anchor/demo/window.hpp"

#include "anchor/error.hpp"

namespace anchor::demo {

WindowState::WindowState(std::size_t window, std::size_t dims, WindowMode mode)
    : window_(window), dims_(dims), mode_(mode), sums_(dims, 0.0), min_q_(dims), max_q_(dims) {
  if (window == 0) throw Error(Errc::ConfigError, "window must be at least 1");
  if (dims == 0) throw Error(Errc::ConfigError, "feature vector needs at least one dimension");
}

std::optional<std::vector<FeatureAggregate>> WindowState::push(std::span<const double> features) {
  if (features.size() != dims_) {
    throw Error(Errc::ArityMismatch, "expected " + std::to_string(dims_) + " features, got " +
                                         std::to_string(features.size()));
  }
  const std::uint64_t index = front_index_ + buffer_.size();
  buffer_.emplace_back(features.begin(), features.end());
  ++pushes_;
  for (std::size_t d = 0; d < dims_; ++d) {
    const double v = features[d];
    sums_[d] += v;
    auto& mn = min_q_[d];
    while (!mn.empty() && buffer_[mn.back() - front_index_][d] >= v) mn.pop_back();
    mn.push_back(index);
    auto& mx = max_q_[d];
    while (!mx.empty() && buffer_[mx.back() - front_index_][d] <= v) mx.pop_back();
    mx.push_back(index);
  }
  // Subtracting evicted values lets rounding drift accumulate; a fresh sum
  // once per window length keeps the error bounded.
  if (pushes_ % window_ == 0) resum();

  if (buffer_.size() < window_) return std::nullopt;
  auto out = aggregates();
  if (mode_ == WindowMode::Sliding) {
    evict_front();
  } else {
    while (!buffer_.empty()) evict_front();
  }
  return out;
}

std::vector<FeatureAggregate> WindowState::aggregates() const {
  std::vector<FeatureAggregate> out(dims_);
  if (buffer_.empty()) return out;
  const double n = static_cast<double>(buffer_.size());
  for (std::size_t d = 0; d < dims_; ++d) {
    out[d].mean = sums_[d] / n;
    out[d].min = buffer_[min_q_[d].front() - front_index_][d];
    out[d].max = buffer_[max_q_[d].front() - front_index_][d];
    out[d].count = buffer_.size();
  }
  return out;
}

void WindowState::evict_front() {
  for (std::size_t d = 0; d < dims_; ++d) {
    sums_[d] -= buffer_.front()[d];
    if (!min_q_[d].empty() && min_q_[d].front() == front_index_) min_q_[d].pop_front();
    if (!max_q_[d].empty() && max_q_[d].front() == front_index_) max_q_[d].pop_front();
  }
  buffer_.pop_front();
  ++front_index_;
  if (buffer_.empty()) {
    for (auto& s : sums_) s = 0.0;
  }
}

void WindowState::resum() {
  for (std::size_t d = 0; d < dims_; ++d) {
    double s = 0.0;
    for (const auto& v : buffer_) s += v[d];
    sums_[d] = s;
  }
}

}  // namespace anchor::demo
