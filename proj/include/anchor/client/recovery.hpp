#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace anchor::client {

enum class ConnState { Disconnected, Connecting, Registered, Draining };

enum class RecoveryEvent {
  Start,                // client constructed; first attempt has no delay
  ConnError,
  RxSilence,
  HeartbeatAckMissing,
  ConnEstablished,
  RegisterAcked,
  CleanupDone,          // connection closed, in-flight sends returned to the queue
  BackoffElapsed,
};

std::string_view to_string(ConnState s) noexcept;
std::string_view to_string(RecoveryEvent e) noexcept;

/// Delay before the next attempt after n consecutive failures (n >= 1):
/// min(base * factor^(n-1), cap), scaled by a uniform factor in [1-jitter, 1+jitter].
struct BackoffPolicy {
  std::uint64_t base_ns = 100'000'000;
  double factor = 2.0;
  std::uint64_t cap_ns = 5'000'000'000;
  double jitter = 0.2;

  std::uint64_t nominal_ns(unsigned failures) const noexcept;
  std::uint64_t lower_bound_ns(unsigned failures) const noexcept;
  std::uint64_t upper_bound_ns(unsigned failures) const noexcept;
  std::uint64_t draw_ns(unsigned failures, std::mt19937_64& rng) const;
};

enum class RecoveryAction {
  None,
  StartConnect,
  SendRegistration,   // Register followed by every desired subscription
  CloseConnection,
  ScheduleBackoff,    // wait Transition::delay_ns, then BackoffElapsed
};

struct Transition {
  ConnState from;
  ConnState to;
  RecoveryAction action = RecoveryAction::None;
  std::uint64_t delay_ns = 0;
};

/// Fault detection -> cleanup and reconnect -> re-registration. Total over
/// its event alphabet: events with no meaning in the current state are no-ops.
class RecoveryMachine {
 public:
  RecoveryMachine(BackoffPolicy policy, std::uint64_t seed) : policy_(policy), rng_(seed) {}

  Transition step(RecoveryEvent e);

  ConnState state() const noexcept { return state_; }
  unsigned failures() const noexcept { return failures_; }
  const BackoffPolicy& policy() const noexcept { return policy_; }

 private:
  BackoffPolicy policy_;
  std::mt19937_64 rng_;
  ConnState state_ = ConnState::Disconnected;
  unsigned failures_ = 0;
};

}  // namespace anchor::client
