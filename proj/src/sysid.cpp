#include "servotune/sysid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include <fftw3.h>

#include "servotune/error.hpp"

namespace servotune {
namespace {

class RealFft {
 public:
  explicit RealFft(std::size_t length)
      : length_(length),
        in_(fftw_alloc_real(length)),
        out_(fftw_alloc_complex(length / 2 + 1)),
        plan_(fftw_plan_dft_r2c_1d(static_cast<int>(length), in_, out_, FFTW_ESTIMATE)) {}
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::span<double> input() { return {in_, length_}; }

  Complex bin(std::size_t k) const { return {out_[k][0], out_[k][1]}; }

  void execute() { fftw_execute(plan_); }

 private:
  std::size_t length_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

double interpolate_log(double f, double f0, double f1, double v0, double v1) {
  const double t = (std::log(f) - std::log(f0)) / (std::log(f1) - std::log(f0));
  return v0 + t * (v1 - v0);
}

bool coherent(const FrequencyResponse& frf, std::size_t i, double threshold) {
  return frf.coherence[i] >= threshold;
}

}  // namespace

void BodeFeatures::validate() const {
  if (!(f_antiresonance < f_resonance)) {
    throw Error(ErrorCode::kNoResonance, "antiresonance must lie below the resonance");
  }
  if (!(peak_gap_db > 0.0)) {
    throw Error(ErrorCode::kNoResonance, "resonance peak must exceed the antiresonance dip");
  }
}

FrequencyResponse estimate_frf(std::span<const double> input, std::span<const double> output,
                               double sample_period, std::size_t segment_length,
                               double overlap_fraction) {
  if (input.size() != output.size()) {
    throw Error(ErrorCode::kInvalidInput, "input and output records differ in length");
  }
  if (segment_length < 4 || !std::has_single_bit(segment_length)) {
    throw Error(ErrorCode::kInvalidInput, "segment length must be a power of two >= 4");
  }
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidInput, "overlap fraction must lie in [0, 1)");
  }
  if (!(sample_period > 0.0)) throw Error(ErrorCode::kInvalidInput, "sample period must be positive");
  if (input.size() < 2 * segment_length) {
    throw Error(ErrorCode::kInsufficientData,
                "record of " + std::to_string(input.size()) + " samples is too short; need at least " +
                    std::to_string(2 * segment_length) + " for segment length " +
                    std::to_string(segment_length));
  }

  const std::size_t n = segment_length;
  const std::size_t hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - overlap_fraction))));
  std::vector<double> window(n);
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n));
  }

  const std::size_t bins = n / 2 + 1;
  std::vector<double> suu(bins, 0.0), syy(bins, 0.0);
  std::vector<Complex> syu(bins, Complex{});
  std::vector<Complex> u_spectrum(bins);
  RealFft fft(n);

  auto load_segment = [&](std::span<const double> data, std::size_t start) {
    const auto segment = data.subspan(start, n);
    const double mean = std::accumulate(segment.begin(), segment.end(), 0.0) / static_cast<double>(n);
    auto buffer = fft.input();
    for (std::size_t i = 0; i < n; ++i) buffer[i] = (segment[i] - mean) * window[i];
    fft.execute();
  };

  for (std::size_t start = 0; start + n <= input.size(); start += hop) {
    load_segment(input, start);
    for (std::size_t k = 0; k < bins; ++k) u_spectrum[k] = fft.bin(k);
    load_segment(output, start);
    for (std::size_t k = 0; k < bins; ++k) {
      const Complex y = fft.bin(k);
      suu[k] += std::norm(u_spectrum[k]);
      syy[k] += std::norm(y);
      syu[k] += std::conj(u_spectrum[k]) * y;
    }
  }

  FrequencyResponse frf;
  const double resolution = 1.0 / (static_cast<double>(n) * sample_period);
  for (std::size_t k = 1; k + 1 < bins; ++k) {
    frf.frequencies.push_back(resolution * static_cast<double>(k));
    if (suu[k] > 0.0 && syy[k] > 0.0) {
      frf.response.push_back(syu[k] / suu[k]);
      frf.coherence.push_back(std::clamp(std::norm(syu[k]) / (suu[k] * syy[k]), 0.0, 1.0));
    } else {
      frf.response.push_back(suu[k] > 0.0 ? syu[k] / suu[k] : Complex{});
      frf.coherence.push_back(0.0);
    }
  }
  return frf;
}

std::vector<FrequencyInterval> coherence_mask(const FrequencyResponse& frf, double threshold) {
  std::vector<FrequencyInterval> intervals;
  std::size_t i = 0;
  while (i < frf.size()) {
    if (!coherent(frf, i, threshold)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < frf.size() && coherent(frf, j + 1, threshold)) ++j;
    intervals.push_back({frf.frequencies[i], frf.frequencies[j], i, j});
    i = j + 1;
  }
  return intervals;
}

PhaseCrossover find_phase_crossover(const FrequencyResponse& frf, double coherence_threshold) {
  frf.validate();
  const auto magnitude = frf.magnitude_db();
  const auto phase = frf.phase_deg();
  for (std::size_t i = 0; i + 1 < frf.size(); ++i) {
    if (!coherent(frf, i, coherence_threshold) || !coherent(frf, i + 1, coherence_threshold)) {
      continue;
    }
    if (phase[i] > -180.0 && phase[i + 1] <= -180.0) {
      const double t = (-180.0 - phase[i]) / (phase[i + 1] - phase[i]);
      const double log_f = std::log(frf.frequencies[i]) +
                           t * (std::log(frf.frequencies[i + 1]) - std::log(frf.frequencies[i]));
      return {std::exp(log_f), magnitude[i] + t * (magnitude[i + 1] - magnitude[i])};
    }
  }
  throw Error(ErrorCode::kNoCrossover, "phase never crosses -180 deg inside the coherent band");
}

namespace {
constexpr double kMinPairProminenceDb = 3.0;
}  // namespace

BodeFeatures extract_features(const FrequencyResponse& frf, double coherence_threshold) {
  const PhaseCrossover crossover = find_phase_crossover(frf, coherence_threshold);
  const auto magnitude = frf.magnitude_db();

  // Locate the pair on the rigid-body-compensated magnitude (|H|·f), where the
  // integrator slope no longer masks the resonance, then refine on |H| itself.
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < frf.size(); ++i) {
    if (coherent(frf, i, coherence_threshold)) usable.push_back(i);
  }
  if (usable.size() < 3) {
    throw Error(ErrorCode::kNoResonance, "too few coherent bins to locate a resonance");
  }
  auto compensated = [&](std::size_t i) { return magnitude[i] + to_db(frf.frequencies[i]); };
  std::size_t peak_pos = 0;
  for (std::size_t p = 1; p < usable.size(); ++p) {
    if (compensated(usable[p]) > compensated(usable[peak_pos])) peak_pos = p;
  }
  if (peak_pos == 0 || peak_pos + 1 == usable.size()) {
    throw Error(ErrorCode::kNoResonance, "no resonance peak above an antiresonance");
  }
  std::size_t dip_pos = 0;
  for (std::size_t p = 1; p < peak_pos; ++p) {
    if (compensated(usable[p]) < compensated(usable[dip_pos])) dip_pos = p;
  }
  if (compensated(usable[peak_pos]) - compensated(usable[dip_pos]) < kMinPairProminenceDb) {
    throw Error(ErrorCode::kNoResonance, "no antiresonance/resonance pair stands out of the response");
  }

  std::size_t resonance = usable[dip_pos + 1];
  for (std::size_t p = dip_pos + 1; p < usable.size(); ++p) {
    if (magnitude[usable[p]] > magnitude[resonance]) resonance = usable[p];
  }
  std::size_t antiresonance = usable.front();
  for (std::size_t p = 0; p < usable.size() && usable[p] < resonance; ++p) {
    if (magnitude[usable[p]] < magnitude[antiresonance]) antiresonance = usable[p];
  }

  BodeFeatures features;
  features.f_resonance = frf.frequencies[resonance];
  features.f_antiresonance = frf.frequencies[antiresonance];
  features.peak_gap_db = magnitude[resonance] - magnitude[antiresonance];
  features.f_minus180 = crossover.frequency_hz;
  features.initial_margin_reading_db = crossover.magnitude_db;
  features.validate();
  return features;
}

BodeReading read_at(const FrequencyResponse& frf, double frequency_hz) {
  if (frf.empty() || !(frequency_hz >= frf.frequencies.front()) ||
      !(frequency_hz <= frf.frequencies.back())) {
    throw Error(ErrorCode::kRange,
                "frequency " + std::to_string(frequency_hz) + " Hz outside the response grid");
  }
  const auto magnitude = frf.magnitude_db();
  const auto phase = frf.phase_deg();
  const auto it = std::lower_bound(frf.frequencies.begin(), frf.frequencies.end(), frequency_hz);
  const auto i = static_cast<std::size_t>(it - frf.frequencies.begin());
  if (frf.frequencies[i] == frequency_hz) return {magnitude[i], phase[i]};
  const double f0 = frf.frequencies[i - 1];
  const double f1 = frf.frequencies[i];
  return {interpolate_log(frequency_hz, f0, f1, magnitude[i - 1], magnitude[i]),
          interpolate_log(frequency_hz, f0, f1, phase[i - 1], phase[i])};
}

}  // namespace servotune
