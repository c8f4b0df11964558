#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace anchor::demo {

struct FeatureAggregate {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::uint64_t count = 0;

  friend bool operator==(const FeatureAggregate&, const FeatureAggregate&) = default;
};

enum class WindowMode { Sliding, Tumbling };

/// Window buffer of normalized feature vectors with running aggregates:
/// running sums for the mean, monotonic deques for min and max.
class WindowState {
 public:
  /// Throws Error(ConfigError) when window or dims is zero.
  WindowState(std::size_t window, std::size_t dims, WindowMode mode = WindowMode::Sliding);

  /// Appends one vector. When the buffer spans the window, returns the
  /// aggregates over it and then evicts (one entry when sliding, all when
  /// tumbling). Throws Error(ArityMismatch).
  std::optional<std::vector<FeatureAggregate>> push(std::span<const double> features);

  /// Aggregates over the current contents; count 0 when empty.
  std::vector<FeatureAggregate> aggregates() const;
  const std::deque<std::vector<double>>& buffer() const noexcept { return buffer_; }
  std::size_t window() const noexcept { return window_; }
  std::size_t dims() const noexcept { return dims_; }

 private:
  void evict_front();
  void resum();

  std::size_t window_;
  std::size_t dims_;
  WindowMode mode_;
  std::deque<std::vector<double>> buffer_;
  std::uint64_t front_index_ = 0;  // absolute index of buffer_.front()
  std::uint64_t pushes_ = 0;
  std::vector<double> sums_;
  // Per feature: absolute indices with increasing (min) / decreasing (max) values.
  std::vector<std::deque<std::uint64_t>> min_q_, max_q_;
};

}  // namespace anchor::demo
