#include "rawscore/error.hpp"

namespace rawscore {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kCorruptFile: return "CorruptFile";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kInsufficientLevels: return "InsufficientLevels";
    case ErrorCode::kNonPhysicalFit: return "NonPhysicalFit";
    case ErrorCode::kModelMismatch: return "ModelMismatch";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kWrongBitDepth: return "WrongBitDepth";
    case ErrorCode::kEncodeFailure: return "EncodeFailure";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
    case ErrorCode::kRecipeMismatch: return "RecipeMismatch";
    case ErrorCode::kEmptyOrgan: return "EmptyOrgan";
    case ErrorCode::kTooFewReplicates: return "TooFewReplicates";
    case ErrorCode::kDegenerateSpread: return "DegenerateSpread";
    case ErrorCode::kEmptyPairing: return "EmptyPairing";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kFitDiverged: return "FitDiverged";
    case ErrorCode::kNoPeak: return "NoPeak";
    case ErrorCode::kDegenerateProfile: return "DegenerateProfile";
    case ErrorCode::kNoRoot: return "NoRoot";
    case ErrorCode::kNonSquare: return "NonSquare";
    case ErrorCode::kTooFewAngles: return "TooFewAngles";
    case ErrorCode::kGeometryMismatch: return "GeometryMismatch";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  // 1 is reserved for unexpected exceptions, 2 for command-line usage errors.
  return 10 + static_cast<int>(code);
}

}  // namespace rawscore
