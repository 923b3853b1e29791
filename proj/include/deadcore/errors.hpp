#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deadcore {

enum class ErrorCode {
  InvalidParameter,
  NonIntegrableGrowth,
  SingularTransform,
  InvertedElement,
  EmptyTarget,
  NonSPDCoefficient,
  NoConvergence,
  InvalidKinetic,
  UnfrozenInfinitePotential,
  SingularSystem,
  HypothesisViolated,
  EmptyRegion,
  InsufficientSamples,
  CornerBoundary,
  NoDeadCore,
  ParseError,
  ValidationError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace deadcore
