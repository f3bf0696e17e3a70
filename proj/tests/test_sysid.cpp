#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "servotune/plant.hpp"
#include "servotune/sysid.hpp"
#include "support.hpp"

using namespace servotune;

namespace {

constexpr double kT = 125e-6;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// K e^{-s tau} / s on a log grid: -180 deg at f = 1 / (4 tau).
FrequencyResponse delayed_integrator(double gain, double tau, double f_lo, double f_hi,
                                     std::size_t n) {
  auto f = logspace(f_lo, f_hi, n);
  std::vector<Complex> h(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Complex s{0.0, kTwoPi * f[i]};
    h[i] = gain * std::exp(-s * tau) / s;
  }
  return make_exact_response(std::move(f), std::move(h));
}

}  // namespace

TEST_CASE("a wire is identified as unity") {
  const auto u = white_noise(1.0, 8192, 3);
  const auto frf = estimate_frf(u, u, kT, 256);
  REQUIRE(frf.size() == 127);
  CHECK(frf.frequencies.front() == doctest::Approx(8000.0 / 256.0));
  CHECK(frf.frequencies.back() == doctest::Approx(4000.0 - 8000.0 / 256.0));
  const auto mag = frf.magnitude_db();
  const auto phase = frf.phase_deg();
  for (std::size_t i = 0; i < frf.size(); ++i) {
    REQUIRE(mag[i] == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
    REQUIRE(phase[i] == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    REQUIRE(frf.coherence[i] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("a gain of two reads 6.02 dB") {
  const auto u = white_noise(1.0, 8192, 4);
  std::vector<double> y(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) y[i] = 2.0 * u[i];
  const auto mag = estimate_frf(u, y, kT, 512).magnitude_db();
  for (double m : mag) REQUIRE(m == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-9));
}

TEST_CASE("a pure delay shows a linear phase") {
  const std::size_t d = 2;
  const auto u = white_noise(1.0, 65536, 5);
  std::vector<double> y(u.size(), 0.0);
  for (std::size_t i = d; i < u.size(); ++i) y[i] = u[i - d];
  const auto frf = estimate_frf(u, y, kT, 1024);
  const auto mag = frf.magnitude_db();
  const auto phase = frf.phase_deg();
  for (std::size_t i = 0; i < frf.size(); ++i) {
    const double expected = -360.0 * frf.frequencies[i] * static_cast<double>(d) * kT;
    REQUIRE(std::abs(phase[i] - expected) < 0.5);
    REQUIRE(std::abs(mag[i]) < 0.1);
    REQUIRE(frf.coherence[i] > 0.98);
  }
}

TEST_CASE("estimator input checks") {
  const auto u = white_noise(1.0, 4096, 1);
  CHECK(error_of([&] { estimate_frf(u, u, kT, 1000); }) == "invalid-input");
  CHECK(error_of([&] { estimate_frf(u, u, kT, 4096); }) == "insufficient-data");
  CHECK(error_of([&] { estimate_frf(u, std::span(u).first(100), kT, 64); }) == "invalid-input");
  CHECK(error_of([&] { estimate_frf(u, u, kT, 256, 1.0); }) == "invalid-input");
  CHECK(error_of([&] { estimate_frf(u, u, kT, 2048); }) == "none");
}

TEST_CASE("coherence mask groups consecutive bins") {
  FrequencyResponse frf = make_exact_response({1.0, 2.0, 3.0, 4.0, 5.0, 6.0},
                                              std::vector<Complex>(6, Complex{1.0, 0.0}));
  frf.coherence = {0.99, 0.96, 0.5, 0.97, 0.2, 0.95};
  const auto intervals = coherence_mask(frf, 0.95);
  REQUIRE(intervals.size() == 3);
  CHECK(intervals[0].first == 0);
  CHECK(intervals[0].last == 1);
  CHECK(intervals[0].low_hz == 1.0);
  CHECK(intervals[0].high_hz == 2.0);
  CHECK(intervals[1].first == 3);
  CHECK(intervals[1].last == 3);
  CHECK(intervals[2].first == 5);
  CHECK(coherence_mask(frf, 0.999).empty());
}

TEST_CASE("phase crossover of a delayed integrator") {
  const double tau = 250e-6;
  const double gain = 500.0;
  const auto frf = delayed_integrator(gain, tau, 10.0, 3000.0, 4000);
  const auto pc = find_phase_crossover(frf);
  const double f180 = 1.0 / (4.0 * tau);
  CHECK(pc.frequency_hz == doctest::Approx(f180).epsilon(1e-4));
  CHECK(pc.magnitude_db == doctest::Approx(20.0 * std::log10(gain / (kTwoPi * f180))).epsilon(1e-4));

  SUBCASE("incoherent bins hide the crossing") {
    auto masked = frf;
    for (std::size_t i = 0; i < masked.size(); ++i) {
      if (masked.frequencies[i] > 900.0 && masked.frequencies[i] < 1100.0) masked.coherence[i] = 0.1;
    }
    CHECK(error_of([&] { find_phase_crossover(masked, 0.95); }) == "no-crossover");
    CHECK(error_of([&] { find_phase_crossover(masked, 0.0); }) == "none");
  }
}

TEST_CASE("integrator alone never reaches -180") {
  const auto frf = delayed_integrator(1.0, 0.0, 1.0, 1000.0, 200);
  CHECK(error_of([&] { find_phase_crossover(frf); }) == "no-crossover");
}

TEST_CASE("read_at interpolates on a log axis") {
  const auto frf = delayed_integrator(100.0, 0.0, 10.0, 1000.0, 3);  // 10, 100, 1000 Hz
  const auto at_grid = read_at(frf, 100.0);
  CHECK(at_grid.magnitude_db == doctest::Approx(20.0 * std::log10(100.0 / (kTwoPi * 100.0))));
  // -20 dB/decade is a straight line in log f, so interpolation is exact.
  const auto between = read_at(frf, 300.0);
  CHECK(between.magnitude_db == doctest::Approx(20.0 * std::log10(100.0 / (kTwoPi * 300.0))));
  CHECK(between.phase_deg == doctest::Approx(-90.0));
  CHECK(error_of([&] { read_at(frf, 5.0); }) == "range");
  CHECK(error_of([&] { read_at(frf, 1001.0); }) == "range");
}

TEST_CASE("features of the exact twin responses") {
  for (const auto& p : {rigid_twin(), flexible_twin()}) {
    const auto grid = linspace(2.0, 3990.0, 3990 / 2);
    const auto frf = sampled_frf(p, grid, kT);
    const auto features = extract_features(frf);
    CAPTURE(p.stiffness);
    // Damping and the rigid-body 1/f move the extrema slightly off the
    // undamped formulas; brute-force search of the exact magnitude is the
    // reference, the formulas a sanity bound.
    const auto mag = frf.magnitude_db();
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const bool near_ar = std::abs(grid[i] - p.antiresonance_hz()) < 0.2 * p.antiresonance_hz();
      const bool near_res = std::abs(grid[i] - p.resonance_hz()) < 0.2 * p.resonance_hz();
      if (near_ar && (lo == 0 || mag[i] < mag[lo])) lo = i;
      if (near_res && (hi == 0 || mag[i] > mag[hi])) hi = i;
    }
    CHECK(features.f_resonance == grid[hi]);
    CHECK(features.f_antiresonance == grid[lo]);
    CHECK(features.peak_gap_db == doctest::Approx(mag[hi] - mag[lo]));
    CHECK(features.f_resonance == doctest::Approx(p.resonance_hz()).epsilon(0.02));
    CHECK(features.f_antiresonance == doctest::Approx(p.antiresonance_hz()).epsilon(0.02));
    CHECK(features.peak_gap_db > 30.0);
    CHECK(features.f_minus180 > features.f_resonance);
    CHECK(features.initial_margin_reading_db == doctest::Approx(read_at(frf, features.f_minus180).magnitude_db));
  }
}

TEST_CASE("a response without a resonance pair is rejected") {
  const auto frf = delayed_integrator(500.0, 250e-6, 10.0, 3000.0, 500);
  CHECK(error_of([&] { extract_features(frf); }) == "no-resonance");
}
