#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace servotune {

enum class ErrorCode {
  kInvalidInput,
  kInvalidConfig,
  kRange,
  kGrid,
  kSampling,
  kDesign,
  kInsufficientData,
  kDivergence,
  kNoCrossover,
  kNoResonance,
  kInfeasibleMargin,
  kPhaseInfeasible,
  kNoOscillation,
  kNonConvergence,
  kIo,
};

/// Stable identifier used in reports and CLI diagnostics, e.g. "no-crossover".
std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace servotune
