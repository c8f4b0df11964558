#pragma once

#include <cstdint>
#include <string>

#include "anchor/wire/bytes.hpp"

namespace anchor::demo {

enum class Action : std::uint8_t { Hold = 0, Increase = 1, Decrease = 2 };
enum class EventStatus : std::uint8_t { Started = 1, Success = 2, Failure = 3 };

std::string_view to_string(Action a) noexcept;
std::string_view to_string(EventStatus s) noexcept;

struct CommandMsg {
  std::string project_id;
  std::uint64_t cycle = 0;
  Action action = Action::Hold;
  double magnitude = 0.0;
  std::uint64_t issued_at_ns = 0;
  bool stale = false;  // issued from an empty snapshot

  friend bool operator==(const CommandMsg&, const CommandMsg&) = default;
};

struct EventMsg {
  std::string project_id;
  std::uint64_t ref_command = 0;  // envelope seq of the command
  EventStatus status = EventStatus::Started;
  double measured = 0.0;

  friend bool operator==(const EventMsg&, const EventMsg&) = default;
};

/// Payload encodings carried in envelopes. Decoders throw Error(LengthMismatch).
wire::Bytes encode(const CommandMsg& c);
wire::Bytes encode(const EventMsg& e);
CommandMsg decode_command(wire::ByteView b);
EventMsg decode_event(wire::ByteView b);

/// Replay-log bodies: the envelope seq followed by the payload.
struct LoggedCommand {
  std::uint64_t seq = 0;
  CommandMsg command;
};
struct LoggedEvent {
  std::uint64_t seq = 0;
  EventMsg event;
};
wire::Bytes encode_logged(std::uint64_t seq, wire::ByteView payload);
LoggedCommand decode_logged_command(wire::ByteView body);
LoggedEvent decode_logged_event(wire::ByteView body);

/// Command body with its timestamp cleared, for run-to-run comparison.
wire::Bytes canonical(const CommandMsg& c);

}  // namespace anchor::demo
