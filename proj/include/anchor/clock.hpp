#pragma once

#include <cerrno>
#include <cstdint>
#include <ctime>

namespace anchor {

/// Nanoseconds on CLOCK_MONOTONIC. Comparable across processes on one host.
inline std::uint64_t monotonic_ns() noexcept {
  timespec ts{};
  ::clock_gettime(CLOCK_MONOTONIC, &ts);
  return static_cast<std::uint64_t>(ts.tv_sec) * 1'000'000'000ull +
         static_cast<std::uint64_t>(ts.tv_nsec);
}

inline void sleep_until_ns(std::uint64_t deadline) noexcept {
  timespec ts{};
  ts.tv_sec = static_cast<time_t>(deadline / 1'000'000'000ull);
  ts.tv_nsec = static_cast<long>(deadline % 1'000'000'000ull);
  while (::clock_nanosleep(CLOCK_MONOTONIC, TIMER_ABSTIME, &ts, nullptr) == EINTR) {
  }
}

constexpr std::uint64_t kNsPerUs = 1'000ull;
constexpr std::uint64_t kNsPerMs = 1'000'000ull;
constexpr std::uint64_t kNsPerSec = 1'000'000'000ull;

}  // namespace anchor
