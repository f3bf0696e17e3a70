#pragma once

#include <optional>
#include <span>

#include "servotune/frequency_response.hpp"
#include "servotune/plant.hpp"

namespace servotune {

/// Stability margins of an open loop. Fields without a crossing stay empty.
struct MarginReport {
  std::optional<double> phase_margin_deg;
  std::optional<double> gain_margin_db;
  std::optional<double> phase_crossover_hz;
  std::optional<double> gain_crossover_hz;
  /// First -3 dB crossing of |L / (1 + L)|.
  std::optional<double> closed_loop_bandwidth_hz;
  /// max |1 / (1 + L)| over non-singular bins.
  double sensitivity_peak_db = 0.0;
  double sensitivity_peak_hz = 0.0;
};

struct StepMetrics {
  double overshoot_pct = 0.0;
  /// Measured from step onset; +inf when the response never settles.
  double settling_time_s = 0.0;
  double itae = 0.0;
  bool steady_state_reached = true;
};

/// Pointwise product. Parts on a different grid are interpolated onto the
/// overlap with the first part's grid (a warning goes to std::clog).
FrequencyResponse compose_loop(std::span<const FrequencyResponse> parts);

MarginReport margins(const FrequencyResponse& open_loop);

/// S = 1 / (1 + L). Bins with |1 + L| < 1e-12 are set to NaN.
FrequencyResponse sensitivity(const FrequencyResponse& open_loop);

/// T = L / (1 + L).
FrequencyResponse complementary_sensitivity(const FrequencyResponse& open_loop);

/// Largest |S| (dB) inside [low_hz, high_hz]; NaN bins are skipped.
double sensitivity_peak_db(const FrequencyResponse& sensitivity_response, double low_hz,
                           double high_hz);

/// Overshoot, 2 % settling time and ITAE of the motor velocity in `trace`
/// against a step of `reference_value`. The step onset is the first sample
/// of a non-zero reference column, or t = 0 when the trace has none.
StepMetrics step_metrics(const SimTrace& trace, double reference_value);

}  // namespace servotune
