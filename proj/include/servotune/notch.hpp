#pragma once

#include <array>
#include <span>
#include <vector>

#include "servotune/frequency_response.hpp"
#include "servotune/sysid.hpp"

namespace servotune {

enum class DepthMode { kFiniteHalfGap, kInfinite };

/// Design-level notch: center f_N, -3 dB bandwidth and attenuation at the
/// center. An infinite depth is stored as +infinity.
struct NotchParams {
  double center_hz = 0.0;
  double bandwidth_hz = 0.0;
  double depth_db = 0.0;

  bool infinite_depth() const;
  void validate() const;
};

/// Damping ratios of the continuous prototype
/// (s² + 2 ζn ω0 s + ω0²) / (s² + 2 ζd ω0 s + ω0²).
struct NotchPrototype {
  double zeta_numerator = 0.0;
  double zeta_denominator = 0.0;
  double omega0 = 0.0;  ///< rad/s

  Complex response(double frequency_hz) const;
};

/// Second-order section y = b0 x + b1 x[-1] + b2 x[-2] - a1 y[-1] - a2 y[-2].
/// `denominator[0]` is always one.
struct NotchBiquad {
  std::array<double, 3> numerator{1.0, 0.0, 0.0};
  std::array<double, 3> denominator{1.0, 0.0, 0.0};
  double sample_period = 0.0;

  Complex response(double frequency_hz) const;
  /// Largest pole modulus.
  double pole_radius() const;
};

struct NotchDesign {
  NotchParams params;
  NotchBiquad biquad;
};

NotchPrototype notch_prototype(const NotchParams& params);

/// Bilinear transform of the prototype, prewarped at the center frequency.
NotchBiquad realize_notch(const NotchParams& params, double sample_period);

/// Notch centered on the resonance with bandwidth = factor · f_N and depth
/// equal to half the resonance/antiresonance gap (or infinite).
NotchDesign design_notch(const BodeFeatures& features, double bandwidth_factor,
                         DepthMode depth_mode, double sample_period);

FrequencyResponse notch_response(const NotchBiquad& biquad, std::span<const double> frequencies);

/// Runs the difference equation from zero state.
std::vector<double> filter_apply(const NotchBiquad& biquad, std::span<const double> signal);

/// Streaming direct-form I section.
class BiquadFilter {
 public:
  explicit BiquadFilter(const NotchBiquad& biquad) : biquad_(biquad) {}

  double process(double input);
  void reset() { x1_ = x2_ = y1_ = y2_ = 0.0; }

 private:
  NotchBiquad biquad_;
  double x1_ = 0.0, x2_ = 0.0, y1_ = 0.0, y2_ = 0.0;
};

}  // namespace servotune
