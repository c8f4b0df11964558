#include "anchor/error.hpp"

namespace anchor {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedTopic: return "MalformedTopic";
    case Errc::FrameTooLarge: return "FrameTooLarge";
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnknownTag: return "UnknownTag";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::PayloadTooLarge: return "PayloadTooLarge";
    case Errc::PatternInvalid: return "PatternInvalid";
    case Errc::IoFailure: return "IoFailure";
    case Errc::SchemaInvalid: return "SchemaInvalid";
    case Errc::VersionUnsupported: return "VersionUnsupported";
    case Errc::RoleViolation: return "RoleViolation";
    case Errc::ArityMismatch: return "ArityMismatch";
    case Errc::ContendedTimeout: return "ContendedTimeout";
    case Errc::UnknownGroup: return "UnknownGroup";
    case Errc::NameCollision: return "NameCollision";
    case Errc::LogCorrupt: return "LogCorrupt";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::NotRegistered: return "NotRegistered";
    case Errc::StaleSnapshot: return "StaleSnapshot";
    case Errc::EmptySamples: return "EmptySamples";
    case Errc::RateUnachievable: return "RateUnachievable";
    case Errc::HarnessFault: return "HarnessFault";
    case Errc::ConfigError: return "ConfigError";
    case Errc::UsageError: return "UsageError";
  }
  return "Unknown";
}

}  // namespace anchor
