#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace avid {

enum class ErrorCode {
  ZeroNorm,
  LengthMismatch,
  NonPositiveTemperature,
  StaleCache,
  ShapeMismatch,
  MomentumOutOfRange,
  InvalidTarget,
  EmptyBucket,
  EmptyNegativePool,
  InsufficientPool,
  InvalidLabel,
  DuplicateEpochUpdate,
  InvalidConfig,
  EmptyCollection,
  DegenerateSplit,
  InvalidSweepKey,
  Io,
  Parse,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every recoverable failure in the library is reported through this type;
/// `code()` is what callers (and tests) branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace avid
