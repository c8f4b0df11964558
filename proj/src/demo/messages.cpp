#include "anchor/demo/messages.hpp"

#include <bit>

#include "anchor/error.hpp"

namespace anchor::demo {

namespace {

[[noreturn]] void bad(const char* what) { throw Error(Errc::LengthMismatch, what); }

void put_f64(wire::ByteWriter& w, double v) { w.u64(std::bit_cast<std::uint64_t>(v)); }

double get_f64(wire::ByteReader& r) {
  std::uint64_t v = 0;
  if (!r.u64(v)) bad("f64 field");
  return std::bit_cast<double>(v);
}

}  // namespace

std::string_view to_string(Action a) noexcept {
  switch (a) {
    case Action::Hold: return "Hold";
    case Action::Increase: return "Increase";
    case Action::Decrease: return "Decrease";
  }
  return "?";
}

std::string_view to_string(EventStatus s) noexcept {
  switch (s) {
    case EventStatus::Started: return "Started";
    case EventStatus::Success: return "Success";
    case EventStatus::Failure: return "Failure";
  }
  return "?";
}

wire::Bytes encode(const CommandMsg& c) {
  wire::Bytes out;
  wire::ByteWriter w(out);
  w.token(c.project_id);
  w.u64(c.cycle);
  w.u8(static_cast<std::uint8_t>(c.action));
  put_f64(w, c.magnitude);
  w.u64(c.issued_at_ns);
  w.u8(c.stale ? 1 : 0);
  return out;
}

wire::Bytes encode(const EventMsg& e) {
  wire::Bytes out;
  wire::ByteWriter w(out);
  w.token(e.project_id);
  w.u64(e.ref_command);
  w.u8(static_cast<std::uint8_t>(e.status));
  put_f64(w, e.measured);
  return out;
}

CommandMsg decode_command(wire::ByteView b) {
  wire::ByteReader r(b);
  CommandMsg c;
  std::uint8_t action = 0, stale = 0;
  if (!r.token(c.project_id) || !r.u64(c.cycle) || !r.u8(action)) bad("command header");
  if (action > 2) bad("command action");
  c.action = static_cast<Action>(action);
  c.magnitude = get_f64(r);
  if (!r.u64(c.issued_at_ns) || !r.u8(stale) || stale > 1) bad("command trailer");
  c.stale = stale != 0;
  if (r.remaining() != 0) bad("command has trailing bytes");
  return c;
}

EventMsg decode_event(wire::ByteView b) {
  wire::ByteReader r(b);
  EventMsg e;
  std::uint8_t status = 0;
  if (!r.token(e.project_id) || !r.u64(e.ref_command) || !r.u8(status)) bad("event header");
  if (status < 1 || status > 3) bad("event status");
  e.status = static_cast<EventStatus>(status);
  e.measured = get_f64(r);
  if (r.remaining() != 0) bad("event has trailing bytes");
  return e;
}

wire::Bytes encode_logged(std::uint64_t seq, wire::ByteView payload) {
  wire::Bytes out;
  wire::ByteWriter w(out);
  w.u64(seq);
  w.raw(payload);
  return out;
}

LoggedCommand decode_logged_command(wire::ByteView body) {
  if (body.size() < 8) bad("logged command");
  wire::ByteReader r(body);
  LoggedCommand c;
  r.u64(c.seq);
  c.command = decode_command(body.subspan(8));
  return c;
}

LoggedEvent decode_logged_event(wire::ByteView body) {
  if (body.size() < 8) bad("logged event");
  wire::ByteReader r(body);
  LoggedEvent e;
  r.u64(e.seq);
  e.event = decode_event(body.subspan(8));
  return e;
}

wire::Bytes canonical(const CommandMsg& c) {
  CommandMsg copy = c;
  copy.issued_at_ns = 0;
  return encode(copy);
}

}  // namespace anchor::demo
