#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vmm {

enum class ErrorCode {
  kAllJittersFailed,
  kDimensionMismatch,
  kDegenerateData,
  kMalformedRecord,
  kZeroBehaviorProbability,
  kDegenerateInstrument,
  kOptimizerDiverged,
  kSingularV,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& what);

inline void require(bool condition, ErrorCode code, const char* what) {
  if (!condition) raise(code, what);
}

}  // namespace vmm
