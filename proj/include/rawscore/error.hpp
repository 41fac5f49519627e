#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rawscore {

enum class ErrorCode {
  kUnsupportedFormat,
  kCorruptFile,
  kIoFailure,
  kInvalidSpec,
  kInsufficientLevels,
  kNonPhysicalFit,
  kModelMismatch,
  kDimMismatch,
  kWrongBitDepth,
  kEncodeFailure,
  kDegenerateLabels,
  kRecipeMismatch,
  kEmptyOrgan,
  kTooFewReplicates,
  kDegenerateSpread,
  kEmptyPairing,
  kSchemaViolation,
  kFitDiverged,
  kNoPeak,
  kDegenerateProfile,
  kNoRoot,
  kNonSquare,
  kTooFewAngles,
  kGeometryMismatch,
  kConfigInvalid,
};

std::string_view error_name(ErrorCode code);

// Process exit code for a failure of the given kind. The table is documented
// in README.md and must stay stable across releases.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace rawscore
