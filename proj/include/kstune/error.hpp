#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kstune {

enum class ErrorKind {
  DimensionMismatch,
  IndexOutOfBounds,
  EmptyKnownSet,
  FractionsExceedOne,
  ConstrainedNotKnown,
  MaskedEntryMissing,
  SingularAfterRegularization,
  LengthMismatch,
  PatternMismatch,
  NonSeparableCombination,
  NonPsdNoise,
  TooLargeForOracle,
  ParseError,
  ConfigError,
  SolverFailure,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::IndexOutOfBounds: return "IndexOutOfBounds";
    case ErrorKind::EmptyKnownSet: return "EmptyKnownSet";
    case ErrorKind::FractionsExceedOne: return "FractionsExceedOne";
    case ErrorKind::ConstrainedNotKnown: return "ConstrainedNotKnown";
    case ErrorKind::MaskedEntryMissing: return "MaskedEntryMissing";
    case ErrorKind::SingularAfterRegularization: return "SingularAfterRegularization";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::PatternMismatch: return "PatternMismatch";
    case ErrorKind::NonSeparableCombination: return "NonSeparableCombination";
    case ErrorKind::NonPsdNoise: return "NonPsdNoise";
    case ErrorKind::TooLargeForOracle: return "TooLargeForOracle";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::SolverFailure: return "SolverFailure";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this exception type.
/// `kind()` is the machine-readable class, `what()` carries the detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& detail) {
  throw Error(kind, detail);
}

}  // namespace kstune
