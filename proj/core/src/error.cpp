#include "avid/error.hpp"

namespace avid {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MomentumOutOfRange: return "MomentumOutOfRange";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::EmptyBucket: return "EmptyBucket";
    case ErrorCode::EmptyNegativePool: return "EmptyNegativePool";
    case ErrorCode::InsufficientPool: return "InsufficientPool";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::DuplicateEpochUpdate: return "DuplicateEpochUpdate";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyCollection: return "EmptyCollection";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::InvalidSweepKey: return "InvalidSweepKey";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace avid
