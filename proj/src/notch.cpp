#include "servotune/notch.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "servotune/error.hpp"

namespace servotune {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Depth at which the -3 dB width of the notch stops existing.
const double kMinimumDepthDb = 10.0 * std::log10(2.0);

std::array<double, 3> bilinear_quadratic(double zeta, double omega0, double warp) {
  const double k2 = warp * warp;
  const double w2 = omega0 * omega0;
  const double mid = 2.0 * zeta * omega0 * warp;
  return {k2 + mid + w2, 2.0 * (w2 - k2), k2 - mid + w2};
}

}  // namespace

bool NotchParams::infinite_depth() const { return std::isinf(depth_db) && depth_db > 0.0; }

void NotchParams::validate() const {
  if (!(center_hz > 0.0) || !std::isfinite(center_hz)) {
    throw Error(ErrorCode::kInvalidInput, "notch center frequency must be positive");
  }
  if (!(bandwidth_hz > 0.0) || !std::isfinite(bandwidth_hz)) {
    throw Error(ErrorCode::kInvalidInput, "notch bandwidth must be positive");
  }
  if (!(depth_db > 0.0)) throw Error(ErrorCode::kInvalidInput, "notch depth must be positive");
  if (!infinite_depth() && depth_db <= kMinimumDepthDb) {
    throw Error(ErrorCode::kDesign, "notch depth " + std::to_string(depth_db) +
                                        " dB leaves no -3 dB width to match the bandwidth");
  }
}

Complex NotchPrototype::response(double frequency_hz) const {
  const Complex s(0.0, kTwoPi * frequency_hz);
  const Complex base = s * s + omega0 * omega0;
  return (base + 2.0 * zeta_numerator * omega0 * s) / (base + 2.0 * zeta_denominator * omega0 * s);
}

NotchPrototype notch_prototype(const NotchParams& params) {
  params.validate();
  const double ratio = params.infinite_depth() ? 0.0 : std::pow(10.0, -params.depth_db / 20.0);
  // |N|² = 1/2 at ω where |ω0² - ω²| = 2 ω0 ω ζd sqrt(1 - 2 r²), so the -3 dB
  // points are 2 ζd sqrt(1 - 2 r²) ω0 apart.
  const double zeta_den =
      params.bandwidth_hz / (2.0 * params.center_hz * std::sqrt(1.0 - 2.0 * ratio * ratio));
  return {ratio * zeta_den, zeta_den, kTwoPi * params.center_hz};
}

NotchBiquad realize_notch(const NotchParams& params, double sample_period) {
  if (!(sample_period > 0.0)) throw Error(ErrorCode::kInvalidInput, "sample period must be positive");
  const NotchPrototype proto = notch_prototype(params);
  if (params.center_hz >= 0.5 / sample_period) {
    throw Error(ErrorCode::kSampling, "notch center at or above Nyquist");
  }
  const double warp = proto.omega0 / std::tan(proto.omega0 * sample_period / 2.0);
  const auto num = bilinear_quadratic(proto.zeta_numerator, proto.omega0, warp);
  const auto den = bilinear_quadratic(proto.zeta_denominator, proto.omega0, warp);

  NotchBiquad biquad;
  biquad.sample_period = sample_period;
  for (std::size_t i = 0; i < 3; ++i) {
    biquad.numerator[i] = num[i] / den[0];
    biquad.denominator[i] = den[i] / den[0];
  }
  return biquad;
}

NotchDesign design_notch(const BodeFeatures& features, double bandwidth_factor,
                         DepthMode depth_mode, double sample_period) {
  features.validate();
  if (!(bandwidth_factor >= 1.0 && bandwidth_factor <= 2.0)) {
    throw Error(ErrorCode::kInvalidInput, "bandwidth factor must lie in [1, 2]");
  }
  if (!(sample_period > 0.0)) throw Error(ErrorCode::kInvalidInput, "sample period must be positive");
  if (features.f_resonance >= 0.25 / sample_period) {
    throw Error(ErrorCode::kSampling, "resonance at " + std::to_string(features.f_resonance) +
                                          " Hz is above half the Nyquist frequency");
  }
  NotchParams params;
  params.center_hz = features.f_resonance;
  params.bandwidth_hz = bandwidth_factor * features.f_resonance;
  params.depth_db = depth_mode == DepthMode::kInfinite ? std::numeric_limits<double>::infinity()
                                                       : features.peak_gap_db / 2.0;
  return {params, realize_notch(params, sample_period)};
}

Complex NotchBiquad::response(double frequency_hz) const {
  const Complex z1 = std::exp(Complex(0.0, -kTwoPi * frequency_hz * sample_period));
  const Complex z2 = z1 * z1;
  return (numerator[0] + numerator[1] * z1 + numerator[2] * z2) /
         (denominator[0] + denominator[1] * z1 + denominator[2] * z2);
}

double NotchBiquad::pole_radius() const {
  const double a1 = denominator[1];
  const double a2 = denominator[2];
  const double disc = a1 * a1 - 4.0 * a2;
  if (disc < 0.0) return std::sqrt(a2);
  const double root = std::sqrt(disc);
  return std::max(std::abs((-a1 + root) / 2.0), std::abs((-a1 - root) / 2.0));
}

FrequencyResponse notch_response(const NotchBiquad& biquad, std::span<const double> frequencies) {
  require_frequency_grid(frequencies);
  if (!frequencies.empty() && frequencies.back() >= 0.5 / biquad.sample_period) {
    throw Error(ErrorCode::kRange, "notch response requested at or above Nyquist");
  }
  std::vector<Complex> response(frequencies.size());
  for (std::size_t i = 0; i < frequencies.size(); ++i) response[i] = biquad.response(frequencies[i]);
  return make_exact_response({frequencies.begin(), frequencies.end()}, std::move(response));
}

double BiquadFilter::process(double input) {
  const auto& b = biquad_.numerator;
  const auto& a = biquad_.denominator;
  const double output = b[0] * input + b[1] * x1_ + b[2] * x2_ - a[1] * y1_ - a[2] * y2_;
  x2_ = x1_;
  x1_ = input;
  y2_ = y1_;
  y1_ = output;
  return output;
}

std::vector<double> filter_apply(const NotchBiquad& biquad, std::span<const double> signal) {
  BiquadFilter filter(biquad);
  std::vector<double> out(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) out[i] = filter.process(signal[i]);
  return out;
}

}  // namespace servotune
