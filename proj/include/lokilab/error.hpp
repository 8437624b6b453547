#pragma once

#include <stdexcept>
#include <string>

namespace lokilab {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kPrecondition,
  kUnsupportedFamily,
  kZeroProbabilityAction,
  kDivergedRollout,
  kNotConverged,
  kMissingExpertData,
  kInternal,
  kIo,
};

const char* to_string(ErrorCode code);

/// Structured error carried by every failing operation in the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Rollout that left the overflow guard; `step` is the offending time index.
class DivergedRollout : public Error {
 public:
  DivergedRollout(int step, const std::string& message)
      : Error(ErrorCode::kDivergedRollout, message), step_(step) {}

  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace lokilab
