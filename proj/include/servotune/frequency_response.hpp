#pragma once

#include <complex>
#include <span>
#include <vector>

namespace servotune {

using Complex = std::complex<double>;

/// Sampled complex frequency response with per-bin coherence.
///
/// Frequencies are in Hz, strictly increasing and positive. The magnitude and
/// phase views are derived on demand; the phase view is unwrapped so that
/// adjacent samples never differ by more than 180 degrees.
struct FrequencyResponse {
  std::vector<double> frequencies;
  std::vector<Complex> response;
  std::vector<double> coherence;

  std::size_t size() const noexcept { return frequencies.size(); }
  bool empty() const noexcept { return frequencies.empty(); }

  std::vector<double> magnitude_db() const;
  std::vector<double> phase_deg() const;

  /// Throws Error(kInvalidInput) when any structural invariant is broken.
  void validate() const;
};

/// Builds a response with coherence fixed at one.
FrequencyResponse make_exact_response(std::vector<double> frequencies,
                                      std::vector<Complex> response);

/// Unwrapped phase in degrees; the first sample lies in (-270, 90].
std::vector<double> unwrap_phase_deg(std::span<const Complex> response);

std::vector<double> linspace(double first, double last, std::size_t count);
std::vector<double> logspace(double first_hz, double last_hz, std::size_t count);

/// Checks frequencies are positive and strictly increasing.
void require_frequency_grid(std::span<const double> frequencies);

double to_db(double magnitude);
double to_db(Complex value);

}  // namespace servotune
