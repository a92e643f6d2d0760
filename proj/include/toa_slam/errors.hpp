#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace toa_slam {

enum class ErrorCode {
  DegenerateGeometry,
  ZeroVariance,
  InvalidInitialValue,
  SingularSystem,
  NoFreeVariables,
  NeverOptimized,
  DegenerateRange,
  EmptyStream,
  NonMonotonicTimestamps,
  NoToaFactors,
  NotMonocular,
  TooFewWaypoints,
  TooFewPoses,
  AssociationFailure,
  SingularGeometry,
  AllSingular,
  ConfigError,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's error record) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace toa_slam
