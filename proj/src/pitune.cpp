#include "servotune/pitune.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "servotune/sysid.hpp"

namespace servotune {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

double pi_extra_gain_db(double omega_ti) {
  return to_db(std::abs(Complex(1.0, omega_ti) / Complex(0.0, omega_ti)));
}

struct CrossoverRead {
  double frequency_hz;
  double magnitude_db;
  double phase_deg;
};

// Lowest-frequency point below f_-180 where the magnitude falls to `target`.
std::optional<CrossoverRead> find_target_crossing(const FrequencyResponse& frf, double target_db,
                                                  double f_limit, double threshold) {
  const auto magnitude = frf.magnitude_db();
  const auto phase = frf.phase_deg();
  const auto& f = frf.frequencies;
  for (std::size_t i = 0; i + 1 < frf.size() && f[i] < f_limit; ++i) {
    if (frf.coherence[i] < threshold || frf.coherence[i + 1] < threshold) continue;
    if (magnitude[i] > target_db && magnitude[i + 1] <= target_db) {
      const double t = (target_db - magnitude[i]) / (magnitude[i + 1] - magnitude[i]);
      const double fc = std::exp(std::log(f[i]) + t * (std::log(f[i + 1]) - std::log(f[i])));
      if (fc > f_limit) break;
      return CrossoverRead{fc, target_db, phase[i] + t * (phase[i + 1] - phase[i])};
    }
  }
  return std::nullopt;
}

double attempt_error(const TuneResult& r, const MarginSpec& spec, double pm_des) {
  if (!r.achieved.phase_margin_deg || !r.achieved.gain_margin_db) {
    return std::numeric_limits<double>::infinity();
  }
  return std::abs(*r.achieved.phase_margin_deg - pm_des) / spec.pm_tolerance_deg +
         std::abs(*r.achieved.gain_margin_db - spec.amplitude_margin_db) / spec.am_tolerance_db;
}

}  // namespace

void PiGains::validate() const {
  if (!(kp > 0.0) || !std::isfinite(kp)) throw Error(ErrorCode::kInvalidInput, "kp must be > 0");
  if (!(ti > 0.0) || !std::isfinite(ti)) throw Error(ErrorCode::kInvalidInput, "ti must be > 0");
}

void MarginSpec::validate() const {
  if (!(amplitude_margin_db > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "desired amplitude margin must be > 0 dB");
  }
  if (phase_margin_deg.has_value() == damping_ratio.has_value()) {
    throw Error(ErrorCode::kInvalidInput, "set exactly one of phase margin and damping ratio");
  }
  if (phase_margin_deg && !(*phase_margin_deg > 0.0 && *phase_margin_deg < 90.0)) {
    throw Error(ErrorCode::kInvalidInput, "phase margin must lie in (0, 90) deg");
  }
  if (damping_ratio && !(*damping_ratio > 0.0 && *damping_ratio <= 1.0)) {
    throw Error(ErrorCode::kInvalidInput, "damping ratio must lie in (0, 1]");
  }
  if (max_iterations < 1) throw Error(ErrorCode::kInvalidInput, "max_iterations must be >= 1");
  if (!(pm_tolerance_deg > 0.0) || !(am_tolerance_db > 0.0) || offset_step_deg < 0.0) {
    throw Error(ErrorCode::kInvalidInput, "tolerances must be positive");
  }
}

double MarginSpec::desired_phase_margin_deg() const {
  return phase_margin_deg ? *phase_margin_deg : pm_from_damping(*damping_ratio);
}

double pm_from_damping(double zeta) {
  if (!(zeta > 0.0) || zeta > 2.0) {
    throw Error(ErrorCode::kInvalidInput, "damping ratio must lie in (0, 2]");
  }
  const double z2 = zeta * zeta;
  const double denominator = std::sqrt(std::sqrt(1.0 + 4.0 * z2 * z2) - 2.0 * z2);
  return std::atan(2.0 * zeta / denominator) / kDegToRad;
}

FrequencyResponse pi_response(const PiGains& gains, std::span<const double> frequencies) {
  gains.validate();
  require_frequency_grid(frequencies);
  std::vector<Complex> response(frequencies.size());
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    const Complex x(0.0, kTwoPi * frequencies[i] * gains.ti);
    response[i] = gains.kp * (x + 1.0) / x;
  }
  return make_exact_response({frequencies.begin(), frequencies.end()}, std::move(response));
}

TuneResult tune_pi(const FrequencyResponse& loop_frf, const MarginSpec& spec) {
  spec.validate();
  loop_frf.validate();
  const double pm_des = spec.desired_phase_margin_deg();

  PhaseCrossover crossover;
  try {
    crossover = find_phase_crossover(loop_frf, spec.coherence_threshold);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoCrossover) throw;
    throw Error(ErrorCode::kInfeasibleMargin,
                "loop phase never reaches -180 deg; no amplitude margin to shape");
  }

  const double target_db = crossover.magnitude_db + spec.amplitude_margin_db;
  const auto read = find_target_crossing(loop_frf, target_db, crossover.frequency_hz,
                                         spec.coherence_threshold);
  if (!read) {
    throw Error(ErrorCode::kInfeasibleMargin,
                "magnitude never reaches " + std::to_string(target_db) +
                    " dB below the -180 deg crossing at " +
                    std::to_string(crossover.frequency_hz) + " Hz");
  }

  TuneResult best;
  double best_error = std::numeric_limits<double>::infinity();
  double offset = spec.phase_offset_deg;
  for (int iteration = 1; iteration <= spec.max_iterations; ++iteration) {
    const double corner_deg = -90.0 + pm_des + offset - read->phase_deg;
    if (!(corner_deg > 0.0 && corner_deg < 90.0)) {
      throw Error(ErrorCode::kPhaseInfeasible,
                  "phase " + std::to_string(read->phase_deg) + " deg at f_c = " +
                      std::to_string(read->frequency_hz) + " Hz leaves no positive integral time");
    }
    const double omega_c = kTwoPi * read->frequency_hz;
    PiGains gains;
    gains.ti = std::tan(corner_deg * kDegToRad) / omega_c;
    gains.kp = std::pow(10.0, -(read->magnitude_db + pi_extra_gain_db(omega_c * gains.ti)) / 20.0);

    const FrequencyResponse parts[] = {pi_response(gains, loop_frf.frequencies), loop_frf};
    TuneResult result;
    result.gains = gains;
    result.desired_phase_margin_deg = pm_des;
    result.f_minus180_hz = crossover.frequency_hz;
    result.initial_margin_reading_db = crossover.magnitude_db;
    result.crossover_frequency_hz = read->frequency_hz;
    result.read_magnitude_db = read->magnitude_db;
    result.read_phase_deg = read->phase_deg;
    result.phase_offset_deg = offset;
    result.achieved = margins(compose_loop(parts));
    result.iterations_used = iteration;

    const double error = attempt_error(result, spec, pm_des);
    if (error < best_error) {
      best_error = error;
      best = result;
    }
    const auto& pm = result.achieved.phase_margin_deg;
    const auto& am = result.achieved.gain_margin_db;
    if (pm && am && std::abs(*pm - pm_des) <= spec.pm_tolerance_deg &&
        std::abs(*am - spec.amplitude_margin_db) <= spec.am_tolerance_db) {
      return result;
    }
    offset += (pm && *pm > pm_des) ? -spec.offset_step_deg : spec.offset_step_deg;
  }
  throw NonConvergenceError("margins not met after " + std::to_string(spec.max_iterations) +
                                " iterations",
                            best);
}

PiGains ziegler_nichols_pi(double ultimate_gain, double ultimate_period_s) {
  PiGains gains{0.45 * ultimate_gain, ultimate_period_s / 1.2};
  gains.validate();
  return gains;
}

RelayResult relay_tune(const TwoMassParams& params, double relay_amplitude, double hysteresis,
                       double sample_period, double duration) {
  ExcitationSpec relay;
  relay.kind = ExcitationKind::kRelay;
  relay.amplitude = relay_amplitude;
  relay.relay_hysteresis = hysteresis;
  relay.duration = duration;
  const SimTrace trace = simulate(params, relay, sample_period);

  const std::span<const double> velocity(trace.motor_velocity);
  const auto settled = velocity.subspan(velocity.size() / 2);
  const auto [lo, hi] = std::minmax_element(settled.begin(), settled.end());
  const double amplitude = (*hi - *lo) / 2.0;
  const double mean = std::accumulate(settled.begin(), settled.end(), 0.0) /
                      static_cast<double>(settled.size());

  std::vector<std::size_t> rising;
  for (std::size_t i = 1; i < settled.size(); ++i) {
    if (settled[i - 1] < mean && settled[i] >= mean) rising.push_back(i);
  }
  if (!(amplitude > 1e-9) || rising.size() < 5) {
    throw Error(ErrorCode::kNoOscillation, "relay experiment shows no sustained limit cycle");
  }
  std::vector<double> periods;
  for (std::size_t i = 1; i < rising.size(); ++i) {
    periods.push_back(static_cast<double>(rising[i] - rising[i - 1]) * sample_period);
  }
  const double period = static_cast<double>(rising.back() - rising.front()) * sample_period /
                        static_cast<double>(rising.size() - 1);
  double spread = 0.0;
  for (double p : periods) spread = std::max(spread, std::abs(p - period));
  if (spread > 0.25 * period + sample_period) {
    throw Error(ErrorCode::kNoOscillation, "relay oscillation period is not stationary");
  }

  RelayResult result;
  result.limit_cycle_amplitude = amplitude;
  result.ultimate_period_s = period;
  result.ultimate_gain = 4.0 * relay_amplitude / (std::numbers::pi * amplitude);
  result.gains = ziegler_nichols_pi(result.ultimate_gain, period);
  return result;
}

}  // namespace servotune
