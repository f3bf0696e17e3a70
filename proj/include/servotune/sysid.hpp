#pragma once

#include <span>
#include <vector>

#include "servotune/frequency_response.hpp"

namespace servotune {

/// Closed frequency interval [low_hz, high_hz] covering bins first..last.
struct FrequencyInterval {
  double low_hz = 0.0;
  double high_hz = 0.0;
  std::size_t first = 0;
  std::size_t last = 0;
};

/// The Bode readings the tuning flow needs from a plant response.
struct BodeFeatures {
  double f_resonance = 0.0;      ///< Hz
  double f_antiresonance = 0.0;  ///< Hz
  /// Resonance-peak magnitude minus antiresonance-dip magnitude.
  double peak_gap_db = 0.0;
  double f_minus180 = 0.0;  ///< Hz
  /// Signed magnitude at f_minus180; negative for a loop with gain margin.
  double initial_margin_reading_db = 0.0;

  void validate() const;
};

struct PhaseCrossover {
  double frequency_hz = 0.0;
  double magnitude_db = 0.0;
};

struct BodeReading {
  double magnitude_db = 0.0;
  double phase_deg = 0.0;
};

/// H1 estimate (cross spectrum over input auto spectrum) using Hann-windowed,
/// mean-removed, overlapping segments. DC and Nyquist bins are dropped.
FrequencyResponse estimate_frf(std::span<const double> input, std::span<const double> output,
                               double sample_period, std::size_t segment_length,
                               double overlap_fraction = 0.5);

/// Maximal runs of bins with coherence >= threshold.
std::vector<FrequencyInterval> coherence_mask(const FrequencyResponse& frf, double threshold);

/// Lowest downward crossing of -180° (unwrapped phase) between two bins that
/// both satisfy the coherence threshold. Throws kNoCrossover when none exists.
PhaseCrossover find_phase_crossover(const FrequencyResponse& frf, double coherence_threshold = 0.0);

/// Resonance/antiresonance pair, its dB gap and the -180° reading.
BodeFeatures extract_features(const FrequencyResponse& frf, double coherence_threshold = 0.0);

/// Log-frequency interpolation of magnitude (dB) and unwrapped phase (deg).
BodeReading read_at(const FrequencyResponse& frf, double frequency_hz);

}  // namespace servotune
