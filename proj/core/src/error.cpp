#include "causalma/error.hpp"

namespace causalma {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::InconsistentDimension: return "InconsistentDimension";
    case ErrorKind::TargetWithOutcome: return "TargetWithOutcome";
    case ErrorKind::InvalidRecord: return "InvalidRecord";
    case ErrorKind::EmptyStudy: return "EmptyStudy";
    case ErrorKind::EmptyTarget: return "EmptyTarget";
    case ErrorKind::ArmSetMismatch: return "ArmSetMismatch";
    case ErrorKind::UnknownStudy: return "UnknownStudy";
    case ErrorKind::UnknownArm: return "UnknownArm";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TooFewStudies: return "TooFewStudies";
    case ErrorKind::InsufficientRows: return "InsufficientRows";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::Separable: return "Separable";
    case ErrorKind::AllWeightsZero: return "AllWeightsZero";
    case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::TooFewDraws: return "TooFewDraws";
    case ErrorKind::FailureBudgetExceeded: return "FailureBudgetExceeded";
  }
  return "Unknown";
}

bool is_input_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::ParseError:
    case ErrorKind::MissingColumn:
    case ErrorKind::InconsistentDimension:
    case ErrorKind::TargetWithOutcome:
    case ErrorKind::InvalidRecord:
    case ErrorKind::EmptyStudy:
    case ErrorKind::EmptyTarget:
    case ErrorKind::ArmSetMismatch:
    case ErrorKind::UnknownStudy:
    case ErrorKind::UnknownArm:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::TooFewStudies:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

}  // namespace causalma
