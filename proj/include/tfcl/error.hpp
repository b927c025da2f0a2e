#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tfcl {

enum class ErrorCode {
  ZeroNormRow,
  ShapeMismatch,
  EmptyInput,
  OutOfDomain,
  NonSquare,
  NonPositiveTemperature,
  TOverflow,
  InvalidScenario,
  InvalidGrid,
  NonFiniteProbe,
  InvalidParams,
  ParseError,
  InconsistentWidth,
  StaleCache,
  DivergedLoss,
  EmptySplit,
  ClassTooSmall,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::TOverflow: return "TOverflow";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::NonFiniteProbe: return "NonFiniteProbe";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InconsistentWidth: return "InconsistentWidth";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
  }
  return "Unknown";
}

// Single exception type for the library. `index` carries the offending row
// (ZeroNormRow) or 1-based line number (ParseError, InconsistentWidth) when
// one applies.
class Error : public std::runtime_error {
 public:
  static constexpr std::size_t kNoIndex = static_cast<std::size_t>(-1);

  Error(ErrorCode code, const std::string& what, std::size_t index = kNoIndex)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::size_t index_;
};

}  // namespace tfcl
