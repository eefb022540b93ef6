#pragma once

#include <stdexcept>
#include <string>

namespace collsynth {

enum class ErrorCode {
  InvalidSize,
  InvalidDegree,
  InvalidFactor,
  InvalidSpec,
  InvalidHorizon,
  InvalidInput,
  InvalidComposition,
  UseComposition,
  UnreachableDestination,
  Stall,
  TimeLimit,
  DependencyCycle,
  Parse,
  UnsupportedVersion,
};

const char* to_string(ErrorCode code);

// Single exception type carried across module boundaries; the code drives CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidSize: return "invalid-size";
    case ErrorCode::InvalidDegree: return "invalid-degree";
    case ErrorCode::InvalidFactor: return "invalid-factor";
    case ErrorCode::InvalidSpec: return "invalid-spec";
    case ErrorCode::InvalidHorizon: return "invalid-horizon";
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::InvalidComposition: return "invalid-composition";
    case ErrorCode::UseComposition: return "use-composition";
    case ErrorCode::UnreachableDestination: return "unreachable-destination";
    case ErrorCode::Stall: return "stall";
    case ErrorCode::TimeLimit: return "time-limit";
    case ErrorCode::DependencyCycle: return "dependency-cycle";
    case ErrorCode::Parse: return "parse-error";
    case ErrorCode::UnsupportedVersion: return "unsupported-version";
  }
  return "unknown";
}

}  // namespace collsynth
