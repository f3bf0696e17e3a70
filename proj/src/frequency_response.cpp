#include "servotune/frequency_response.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "servotune/error.hpp"

namespace servotune {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid-input";
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kRange: return "range";
    case ErrorCode::kGrid: return "grid";
    case ErrorCode::kSampling: return "sampling";
    case ErrorCode::kDesign: return "design";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kNoCrossover: return "no-crossover";
    case ErrorCode::kNoResonance: return "no-resonance";
    case ErrorCode::kInfeasibleMargin: return "infeasible-margin";
    case ErrorCode::kPhaseInfeasible: return "phase-infeasible";
    case ErrorCode::kNoOscillation: return "no-oscillation";
    case ErrorCode::kNonConvergence: return "non-convergence";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

double to_db(double magnitude) { return 20.0 * std::log10(magnitude); }
double to_db(Complex value) { return to_db(std::abs(value)); }

std::vector<double> FrequencyResponse::magnitude_db() const {
  std::vector<double> out(response.size());
  for (std::size_t i = 0; i < response.size(); ++i) out[i] = to_db(response[i]);
  return out;
}

std::vector<double> FrequencyResponse::phase_deg() const { return unwrap_phase_deg(response); }

void FrequencyResponse::validate() const {
  if (response.size() != frequencies.size() || coherence.size() != frequencies.size()) {
    throw Error(ErrorCode::kInvalidInput, "frequency response sequences differ in length");
  }
  require_frequency_grid(frequencies);
  for (double c : coherence) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw Error(ErrorCode::kInvalidInput, "coherence outside [0, 1]");
    }
  }
}

FrequencyResponse make_exact_response(std::vector<double> frequencies,
                                      std::vector<Complex> response) {
  FrequencyResponse frf;
  frf.coherence.assign(frequencies.size(), 1.0);
  frf.frequencies = std::move(frequencies);
  frf.response = std::move(response);
  return frf;
}

std::vector<double> unwrap_phase_deg(std::span<const Complex> response) {
  std::vector<double> out(response.size());
  double offset = 0.0;
  double previous = 0.0;
  for (std::size_t i = 0; i < response.size(); ++i) {
    const double raw = std::arg(response[i]) * 180.0 / std::numbers::pi;
    // Loops that start near -180 (two integrations) must not begin at +180.
    if (i == 0 && raw > 90.0) offset = -360.0;
    if (i > 0) {
      double candidate = raw + offset;
      while (candidate - previous > 180.0) {
        offset -= 360.0;
        candidate -= 360.0;
      }
      while (candidate - previous < -180.0) {
        offset += 360.0;
        candidate += 360.0;
      }
    }
    out[i] = raw + offset;
    previous = out[i];
  }
  return out;
}

std::vector<double> linspace(double first, double last, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = first;
    return out;
  }
  const double step = (last - first) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = first + step * static_cast<double>(i);
  out.back() = last;
  return out;
}

std::vector<double> logspace(double first_hz, double last_hz, std::size_t count) {
  auto exponents = linspace(std::log10(first_hz), std::log10(last_hz), count);
  for (double& e : exponents) e = std::pow(10.0, e);
  return exponents;
}

void require_frequency_grid(std::span<const double> frequencies) {
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    if (!(frequencies[i] > 0.0) || !std::isfinite(frequencies[i])) {
      throw Error(ErrorCode::kInvalidInput,
                  "frequency grid must be positive, got " + std::to_string(frequencies[i]) + " Hz");
    }
    if (i > 0 && !(frequencies[i] > frequencies[i - 1])) {
      throw Error(ErrorCode::kInvalidInput, "frequency grid must be strictly increasing");
    }
  }
}

}  // namespace servotune
