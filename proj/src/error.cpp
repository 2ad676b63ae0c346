#include "statekit/error.hpp"

namespace statekit {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::RaggedCovariates: return "RaggedCovariates";
    case ErrorCode::DegenerateGroup: return "DegenerateGroup";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::ZeroVarianceCovariate: return "ZeroVarianceCovariate";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::SingularFit: return "SingularFit";
    case ErrorCode::NonFinitePrediction: return "NonFinitePrediction";
    case ErrorCode::TooFewUnits: return "TooFewUnits";
    case ErrorCode::IrlsNonConvergence: return "IrlsNonConvergence";
    case ErrorCode::NonFiniteEnergy: return "NonFiniteEnergy";
    case ErrorCode::ScaleUnderflow: return "ScaleUnderflow";
    case ErrorCode::RootNotBracketed: return "RootNotBracketed";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
  }
  return "Unknown";
}

}  // namespace statekit
