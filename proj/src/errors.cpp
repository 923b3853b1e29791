#include "deadcore/errors.hpp"

namespace deadcore {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::NonIntegrableGrowth: return "NonIntegrableGrowth";
    case ErrorCode::SingularTransform: return "SingularTransform";
    case ErrorCode::InvertedElement: return "InvertedElement";
    case ErrorCode::EmptyTarget: return "EmptyTarget";
    case ErrorCode::NonSPDCoefficient: return "NonSPDCoefficient";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InvalidKinetic: return "InvalidKinetic";
    case ErrorCode::UnfrozenInfinitePotential: return "UnfrozenInfinitePotential";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::HypothesisViolated: return "HypothesisViolated";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::CornerBoundary: return "CornerBoundary";
    case ErrorCode::NoDeadCore: return "NoDeadCore";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace deadcore
