#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace anchor::bench {

/// Nearest-rank percentiles: P_p is the ceil(p/100 * n)-th smallest sample
/// (1-based), so P50 of an even-sized set is the lower median.
/// Throws Error(EmptySamples).
std::vector<std::uint64_t> percentiles(std::vector<std::uint64_t> samples, const std::vector<double>& ps = {50, 90, 99});

/// Sorted unique values with the fraction of samples <= value. The last
/// fraction is exactly 1.0. Throws Error(EmptySamples).
std::vector<std::pair<std::uint64_t, double>> ecdf(std::vector<std::uint64_t> samples);

/// ECDF evaluated at x: fraction of samples <= x.
double ecdf_at(const std::vector<std::pair<std::uint64_t, double>>& curve, std::uint64_t x) noexcept;

/// Median of a small set of doubles (mean of the two middles for even sizes).
double median(std::vector<double> v);

}  // namespace anchor::bench
