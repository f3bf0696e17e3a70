#include "servotune/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>

#include "servotune/error.hpp"
#include "servotune/sysid.hpp"

namespace servotune {
namespace {

bool same_grid(const FrequencyResponse& a, const FrequencyResponse& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a.frequencies[i] - b.frequencies[i]) > 1e-9 * a.frequencies[i]) return false;
  }
  return true;
}

Complex interpolate_complex(const FrequencyResponse& frf, double f) {
  const BodeReading r = read_at(frf, f);
  return std::polar(std::pow(10.0, r.magnitude_db / 20.0), r.phase_deg * std::numbers::pi / 180.0);
}

double interpolate_coherence(const FrequencyResponse& frf, double f) {
  const auto it = std::lower_bound(frf.frequencies.begin(), frf.frequencies.end(), f);
  const auto i = static_cast<std::size_t>(it - frf.frequencies.begin());
  if (frf.frequencies[i] == f || i == 0) return frf.coherence[i];
  const double t = (f - frf.frequencies[i - 1]) / (frf.frequencies[i] - frf.frequencies[i - 1]);
  return frf.coherence[i - 1] + t * (frf.coherence[i] - frf.coherence[i - 1]);
}

double log_interp_frequency(const std::vector<double>& f, std::size_t i, double t) {
  return std::exp(std::log(f[i]) + t * (std::log(f[i + 1]) - std::log(f[i])));
}

// Lowest downward crossing of `level`; returns bin index and fraction.
std::optional<std::pair<std::size_t, double>> first_downward_crossing(const std::vector<double>& v,
                                                                      double level) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (v[i] >= level && v[i + 1] < level) return std::pair{i, (level - v[i]) / (v[i + 1] - v[i])};
  }
  return std::nullopt;
}

}  // namespace

FrequencyResponse compose_loop(std::span<const FrequencyResponse> parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidInput, "compose_loop needs at least one part");
  for (const auto& p : parts) p.validate();

  FrequencyResponse out = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const FrequencyResponse& part = parts[k];
    if (same_grid(out, part)) {
      for (std::size_t i = 0; i < out.size(); ++i) {
        out.response[i] *= part.response[i];
        out.coherence[i] = std::min(out.coherence[i], part.coherence[i]);
      }
      continue;
    }
    const double low = std::max(out.frequencies.front(), part.frequencies.front());
    const double high = std::min(out.frequencies.back(), part.frequencies.back());
    if (!(low <= high)) throw Error(ErrorCode::kGrid, "frequency grids do not overlap");
    std::clog << "warning: compose_loop resampling part " << k << " onto a common grid\n";
    FrequencyResponse merged;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double f = out.frequencies[i];
      if (f < low || f > high) continue;
      merged.frequencies.push_back(f);
      merged.response.push_back(out.response[i] * interpolate_complex(part, f));
      merged.coherence.push_back(std::min(out.coherence[i], interpolate_coherence(part, f)));
    }
    if (merged.empty()) throw Error(ErrorCode::kGrid, "no grid point inside the common span");
    out = std::move(merged);
  }
  return out;
}

MarginReport margins(const FrequencyResponse& open_loop) {
  open_loop.validate();
  const auto magnitude = open_loop.magnitude_db();
  const auto phase = open_loop.phase_deg();
  const auto& f = open_loop.frequencies;
  MarginReport report;

  if (auto hit = first_downward_crossing(magnitude, 0.0)) {
    const auto [i, t] = *hit;
    report.gain_crossover_hz = log_interp_frequency(f, i, t);
    report.phase_margin_deg =
        std::remainder(180.0 + phase[i] + t * (phase[i + 1] - phase[i]), 360.0);
  }
  try {
    const PhaseCrossover pc = find_phase_crossover(open_loop);
    report.phase_crossover_hz = pc.frequency_hz;
    report.gain_margin_db = -pc.magnitude_db;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoCrossover) throw;
  }

  const auto closed = complementary_sensitivity(open_loop).magnitude_db();
  if (auto hit = first_downward_crossing(closed, -3.0)) {
    report.closed_loop_bandwidth_hz = log_interp_frequency(f, hit->first, hit->second);
  }

  const auto s = sensitivity(open_loop);
  report.sensitivity_peak_db = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double db = to_db(s.response[i]);
    if (std::isfinite(db) && db > report.sensitivity_peak_db) {
      report.sensitivity_peak_db = db;
      report.sensitivity_peak_hz = f[i];
    }
  }
  return report;
}

FrequencyResponse sensitivity(const FrequencyResponse& open_loop) {
  FrequencyResponse s = open_loop;
  bool singular = false;
  for (auto& v : s.response) {
    const Complex denominator = 1.0 + v;
    if (std::abs(denominator) < 1e-12) {
      v = Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
      singular = true;
    } else {
      v = 1.0 / denominator;
    }
  }
  if (singular) std::clog << "warning: singular bins (|1 + L| < 1e-12) excluded from sensitivity\n";
  return s;
}

FrequencyResponse complementary_sensitivity(const FrequencyResponse& open_loop) {
  FrequencyResponse t = open_loop;
  for (auto& v : t.response) v = v / (1.0 + v);
  return t;
}

double sensitivity_peak_db(const FrequencyResponse& sensitivity_response, double low_hz,
                           double high_hz) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sensitivity_response.size(); ++i) {
    const double f = sensitivity_response.frequencies[i];
    if (f < low_hz || f > high_hz) continue;
    const double db = to_db(sensitivity_response.response[i]);
    if (std::isfinite(db)) peak = std::max(peak, db);
  }
  return peak;
}

StepMetrics step_metrics(const SimTrace& trace, double reference_value) {
  trace.validate();
  if (trace.size() == 0) throw Error(ErrorCode::kInvalidInput, "empty trace");
  if (!(reference_value > 0.0)) throw Error(ErrorCode::kInvalidInput, "reference value must be > 0");

  const std::size_t n = trace.size();
  std::size_t onset = 0;
  if (!trace.reference.empty()) {
    while (onset < n && trace.reference[onset] == 0.0) ++onset;
    if (onset == n) throw Error(ErrorCode::kInvalidInput, "reference column never steps");
  }
  const auto& y = trace.motor_velocity;
  const double band = 0.02 * reference_value;

  StepMetrics metrics;
  double peak = y[onset];
  std::optional<std::size_t> last_outside;
  for (std::size_t i = onset; i < n; ++i) {
    peak = std::max(peak, y[i]);
    if (std::abs(y[i] - reference_value) > band) last_outside = i;
  }
  metrics.overshoot_pct = std::max(0.0, (peak - reference_value) / reference_value * 100.0);

  const std::size_t final_window_start = n - n / 10;
  if (!last_outside) {
    metrics.settling_time_s = 0.0;
  } else if (*last_outside >= final_window_start || *last_outside + 1 >= n) {
    metrics.steady_state_reached = false;
    metrics.settling_time_s = std::numeric_limits<double>::infinity();
  } else {
    metrics.settling_time_s = trace.time(*last_outside + 1) - trace.time(onset);
  }

  const double dt = trace.sample_period;
  double previous = 0.0;
  for (std::size_t i = onset; i < n; ++i) {
    const double t = trace.time(i) - trace.time(onset);
    const double value = t * std::abs(reference_value - y[i]);
    if (i > onset) metrics.itae += 0.5 * (previous + value) * dt;
    previous = value;
  }
  return metrics;
}

}  // namespace servotune
