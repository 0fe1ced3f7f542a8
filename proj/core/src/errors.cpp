#include "vmm/errors.hpp"

namespace vmm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kAllJittersFailed: return "AllJittersFailed";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDegenerateData: return "DegenerateData";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kZeroBehaviorProbability: return "ZeroBehaviorProbability";
    case ErrorCode::kDegenerateInstrument: return "DegenerateInstrument";
    case ErrorCode::kOptimizerDiverged: return "OptimizerDiverged";
    case ErrorCode::kSingularV: return "SingularV";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace vmm
