#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rangeloc {

enum class ErrorKind {
  kInvalidArgument,
  kInvalidRotation,
  kEmptyMeasurements,
  kInfeasible,
  kMaxIterationsExceeded,
  kNumericalBreakdown,
  kDegenerateSpectrum,
  kRankDeficient,
  kInvalidSigma,
  kDegenerateRange,
  kLengthMismatch,
  kZeroSignal,
  kZeroVector,
  kParseError,
  kNonMonotonicTime,
  kEmptyFile,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kInvalidRotation: return "InvalidRotation";
    case ErrorKind::kEmptyMeasurements: return "EmptyMeasurements";
    case ErrorKind::kInfeasible: return "Infeasible";
    case ErrorKind::kMaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorKind::kNumericalBreakdown: return "NumericalBreakdown";
    case ErrorKind::kDegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorKind::kRankDeficient: return "RankDeficient";
    case ErrorKind::kInvalidSigma: return "InvalidSigma";
    case ErrorKind::kDegenerateRange: return "DegenerateRange";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kZeroSignal: return "ZeroSignal";
    case ErrorKind::kZeroVector: return "ZeroVector";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kNonMonotonicTime: return "NonMonotonicTime";
    case ErrorKind::kEmptyFile: return "EmptyFile";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

/// True for failures caused by bad input data rather than numerics.
inline bool is_input_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kEmptyMeasurements:
    case ErrorKind::kLengthMismatch:
    case ErrorKind::kParseError:
    case ErrorKind::kNonMonotonicTime:
    case ErrorKind::kEmptyFile:
    case ErrorKind::kInvalidSigma:
    case ErrorKind::kInvalidRotation:
      return true;
    default:
      return false;
  }
}

}  // namespace rangeloc
