#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace statekit {

enum class ErrorCode {
  NonBinaryTreatment,
  NonFiniteValue,
  RaggedCovariates,
  DegenerateGroup,
  ZeroDenominator,
  ZeroVarianceCovariate,
  SingularDesign,
  SingularFit,
  NonFinitePrediction,
  TooFewUnits,
  IrlsNonConvergence,
  NonFiniteEnergy,
  ScaleUnderflow,
  RootNotBracketed,
  DomainError,
  InvalidConfig,
  FileNotFound,
  ParseError,
  TooManyFailures,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code. Every module reports failure
/// through this type so the CLI can attribute errors uniformly.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace statekit
