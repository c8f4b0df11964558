#include "anchor/bench/stats.hpp"

#include <algorithm>
#include <cmath>

#include "anchor/error.hpp"

namespace anchor::bench {

std::vector<std::uint64_t> percentiles(std::vector<std::uint64_t> samples, const std::vector<double>& ps) {
  if (samples.empty()) throw Error(Errc::EmptySamples, "percentiles of an empty sample set");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  std::vector<std::uint64_t> out;
  out.reserve(ps.size());
  for (double p : ps) {
    if (!(p > 0.0 && p <= 100.0)) throw Error(Errc::UsageError, "percentile outside (0, 100]");
    auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0 - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, samples.size());
    out.push_back(samples[rank - 1]);
  }
  return out;
}

std::vector<std::pair<std::uint64_t, double>> ecdf(std::vector<std::uint64_t> samples) {
  if (samples.empty()) throw Error(Errc::EmptySamples, "ecdf of an empty sample set");
  std::sort(samples.begin(), samples.end());
  std::vector<std::pair<std::uint64_t, double>> out;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    out.emplace_back(samples[i], i + 1 == samples.size() ? 1.0 : static_cast<double>(i + 1) / n);
  }
  return out;
}

double ecdf_at(const std::vector<std::pair<std::uint64_t, double>>& curve, std::uint64_t x) noexcept {
  auto it = std::upper_bound(curve.begin(), curve.end(), x,
                             [](std::uint64_t v, const std::pair<std::uint64_t, double>& pt) { return v < pt.first; });
  if (it == curve.begin()) return 0.0;
  return std::prev(it)->second;
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error(Errc::EmptySamples, "median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2.0;
}

}  // namespace anchor::bench
