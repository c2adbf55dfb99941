#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace oasalign {

// Stable machine-readable error categories. The CLI reports `code()` verbatim.
enum class ErrorCode {
  invalid_argument,
  invalid_layout,
  shape_mismatch,
  non_finite,
  negative_entry,
  unknown_dtype,
  corrupt_manifest,
  io_failure,
  degenerate_input,
  infinite_loss,
  too_large,
  zero_duration,
  zero_variance,
  duplicate_id,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::invalid_layout: return "invalid_layout";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::negative_entry: return "negative_entry";
    case ErrorCode::unknown_dtype: return "unknown_dtype";
    case ErrorCode::corrupt_manifest: return "corrupt_manifest";
    case ErrorCode::io_failure: return "io_failure";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::infinite_loss: return "infinite_loss";
    case ErrorCode::too_large: return "too_large";
    case ErrorCode::zero_duration: return "zero_duration";
    case ErrorCode::zero_variance: return "zero_variance";
    case ErrorCode::duplicate_id: return "duplicate_id";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace oasalign
