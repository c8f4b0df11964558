#include "anchor/client/recovery.hpp"

#include <algorithm>
#include <cmath>

namespace anchor::client {

std::string_view to_string(ConnState s) noexcept {
  switch (s) {
    case ConnState::Disconnected: return "Disconnected";
    case ConnState::Connecting: return "Connecting";
    case ConnState::Registered: return "Registered";
    case ConnState::Draining: return "Draining";
  }
  return "?";
}

std::string_view to_string(RecoveryEvent e) noexcept {
  switch (e) {
    case RecoveryEvent::Start: return "Start";
    case RecoveryEvent::ConnError: return "ConnError";
    case RecoveryEvent::RxSilence: return "RxSilence";
    case RecoveryEvent::HeartbeatAckMissing: return "HeartbeatAckMissing";
    case RecoveryEvent::ConnEstablished: return "ConnEstablished";
    case RecoveryEvent::RegisterAcked: return "RegisterAcked";
    case RecoveryEvent::CleanupDone: return "CleanupDone";
    case RecoveryEvent::BackoffElapsed: return "BackoffElapsed";
  }
  return "?";
}

std::uint64_t BackoffPolicy::nominal_ns(unsigned failures) const noexcept {
  if (failures == 0) return 0;
  const double d = static_cast<double>(base_ns) * std::pow(factor, static_cast<double>(failures - 1));
  return d >= static_cast<double>(cap_ns) ? cap_ns : static_cast<std::uint64_t>(d);
}

std::uint64_t BackoffPolicy::lower_bound_ns(unsigned failures) const noexcept {
  return static_cast<std::uint64_t>(static_cast<double>(nominal_ns(failures)) * (1.0 - jitter));
}

std::uint64_t BackoffPolicy::upper_bound_ns(unsigned failures) const noexcept {
  return static_cast<std::uint64_t>(std::ceil(static_cast<double>(nominal_ns(failures)) * (1.0 + jitter)));
}

std::uint64_t BackoffPolicy::draw_ns(unsigned failures, std::mt19937_64& rng) const {
  const std::uint64_t nominal = nominal_ns(failures);
  if (nominal == 0 || jitter <= 0) return nominal;
  std::uniform_real_distribution<double> dist(1.0 - jitter, 1.0 + jitter);
  const auto d = static_cast<std::uint64_t>(static_cast<double>(nominal) * dist(rng));
  return std::clamp(d, lower_bound_ns(failures), upper_bound_ns(failures));
}

Transition RecoveryMachine::step(RecoveryEvent e) {
  Transition t{state_, state_};
  const bool fault = e == RecoveryEvent::ConnError || e == RecoveryEvent::RxSilence ||
                     e == RecoveryEvent::HeartbeatAckMissing;
  switch (state_) {
    case ConnState::Disconnected:
      if (e == RecoveryEvent::Start || e == RecoveryEvent::BackoffElapsed) {
        t.to = ConnState::Connecting;
        t.action = RecoveryAction::StartConnect;
      }
      break;
    case ConnState::Connecting:
      if (fault) {
        ++failures_;
        t.to = ConnState::Draining;
        t.action = RecoveryAction::CloseConnection;
      } else if (e == RecoveryEvent::ConnEstablished) {
        t.action = RecoveryAction::SendRegistration;
      } else if (e == RecoveryEvent::RegisterAcked) {
        failures_ = 0;
        t.to = ConnState::Registered;
      }
      break;
    case ConnState::Registered:
      if (fault) {
        ++failures_;
        t.to = ConnState::Draining;
        t.action = RecoveryAction::CloseConnection;
      }
      break;
    case ConnState::Draining:
      if (e == RecoveryEvent::CleanupDone) {
        t.to = ConnState::Disconnected;
        t.action = RecoveryAction::ScheduleBackoff;
        t.delay_ns = policy_.draw_ns(failures_, rng_);
      }
      break;
  }
  state_ = t.to;
  return t;
}

}  // namespace anchor::client
