#pragma once

#include <optional>
#include <span>

#include "servotune/analysis.hpp"
#include "servotune/error.hpp"
#include "servotune/frequency_response.hpp"
#include "servotune/notch.hpp"
#include "servotune/pi_gains.hpp"
#include "servotune/plant.hpp"

namespace servotune {

/// Desired margins for the proposed tuning. Exactly one of
/// `phase_margin_deg` and `damping_ratio` is set.
struct MarginSpec {
  double amplitude_margin_db = 10.0;
  std::optional<double> phase_margin_deg;
  std::optional<double> damping_ratio;
  double phase_offset_deg = 0.0;  ///< starting correction added to the PM target
  double offset_step_deg = 3.0;   ///< correction step per verification failure
  int max_iterations = 5;
  double pm_tolerance_deg = 1.0;
  double am_tolerance_db = 0.5;
  /// Reads are restricted to bins with at least this coherence.
  double coherence_threshold = 0.0;

  void validate() const;
  double desired_phase_margin_deg() const;
};

struct TuneResult {
  PiGains gains;
  std::optional<NotchParams> notch;
  double desired_phase_margin_deg = 0.0;
  double f_minus180_hz = 0.0;
  double initial_margin_reading_db = 0.0;
  double crossover_frequency_hz = 0.0;  ///< f_c
  double read_magnitude_db = 0.0;       ///< A_fc
  double read_phase_deg = 0.0;          ///< φ_fc
  double phase_offset_deg = 0.0;        ///< correction in effect for `gains`
  MarginReport achieved;
  int iterations_used = 0;
};

/// Raised when the verification loop runs out of iterations; carries the
/// attempt closest to the requested margins.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& message, TuneResult best)
      : Error(ErrorCode::kNonConvergence, message), best_(std::move(best)) {}

  const TuneResult& best_attempt() const noexcept { return best_; }

 private:
  TuneResult best_;
};

/// Phase margin (deg) giving damping ratio ζ for a second-order loop.
double pm_from_damping(double zeta);

/// Kp (jω Ti + 1) / (jω Ti).
FrequencyResponse pi_response(const PiGains& gains, std::span<const double> frequencies);

/// Margin-based PI synthesis on a notch-included plant response.
///
/// Reads the magnitude at the lowest -180° crossing, finds f_c where the
/// magnitude is that reading plus the desired amplitude margin, and places
/// the PI so the loop crosses 0 dB at f_c with the desired phase margin.
/// The composed loop is then checked; a phase-margin miss shifts the target
/// by `offset_step_deg` and repeats.
TuneResult tune_pi(const FrequencyResponse& loop_frf, const MarginSpec& spec);

struct RelayResult {
  double ultimate_gain = 0.0;
  double ultimate_period_s = 0.0;
  double limit_cycle_amplitude = 0.0;  ///< rad/s
  PiGains gains;
};

/// Ziegler–Nichols PI from the ultimate point: kp = 0.45 Ku, ti = Tu / 1.2.
PiGains ziegler_nichols_pi(double ultimate_gain, double ultimate_period_s);

/// Relay-feedback experiment on motor velocity followed by Ziegler–Nichols.
/// The first half of the record is discarded as transient.
RelayResult relay_tune(const TwoMassParams& params, double relay_amplitude, double hysteresis,
                       double sample_period, double duration = 0.5);

}  // namespace servotune
