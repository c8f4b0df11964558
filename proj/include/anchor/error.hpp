#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace anchor {

enum class Errc {
  // wire
  MalformedTopic,
  FrameTooLarge,
  BadMagic,
  UnknownTag,
  LengthMismatch,
  PayloadTooLarge,
  PatternInvalid,
  // record store
  IoFailure,
  SchemaInvalid,
  VersionUnsupported,
  RoleViolation,
  ArityMismatch,
  ContendedTimeout,
  UnknownGroup,
  NameCollision,
  LogCorrupt,
  // broker / client
  VersionMismatch,
  NotRegistered,
  // demo
  StaleSnapshot,
  // bench
  EmptySamples,
  RateUnachievable,
  HarnessFault,
  // cli / config
  ConfigError,
  UsageError,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace anchor
