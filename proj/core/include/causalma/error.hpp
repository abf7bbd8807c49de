#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace causalma {

enum class ErrorKind {
  // input and configuration problems
  InvalidArgument,
  ParseError,
  MissingColumn,
  InconsistentDimension,
  TargetWithOutcome,
  InvalidRecord,
  EmptyStudy,
  EmptyTarget,
  ArmSetMismatch,
  UnknownStudy,
  UnknownArm,
  DimensionMismatch,
  TooFewStudies,
  // estimation failures
  InsufficientRows,
  RankDeficient,
  EmptyClass,
  Separable,
  AllWeightsZero,
  DegenerateDenominator,
  TooFewDraws,
  FailureBudgetExceeded,
};

std::string_view to_string(ErrorKind kind) noexcept;

// True for kinds caused by bad input or configuration rather than by a
// numerical failure during estimation.
bool is_input_error(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  // The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace causalma
