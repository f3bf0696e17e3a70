#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "doctest.h"
#include "servotune/notch.hpp"
#include "support.hpp"

using namespace servotune;

namespace {

constexpr double kT = 125e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();

double bisect(const auto& g, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((g(lo) < 0.0) == (g(mid) < 0.0)) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

BodeFeatures features(double f_res, double gap_db) {
  BodeFeatures f;
  f.f_resonance = f_res;
  f.f_antiresonance = f_res / 2.0;
  f.peak_gap_db = gap_db;
  f.f_minus180 = 2.0 * f_res;
  f.initial_margin_reading_db = -3.0;
  return f;
}

}  // namespace

TEST_CASE("prototype depth and -3 dB bandwidth") {
  for (const NotchParams p : {NotchParams{750.0, 750.0, 20.0}, NotchParams{450.0, 900.0, 23.5},
                              NotchParams{300.0, 60.0, 6.0}}) {
    const auto proto = notch_prototype(p);
    CAPTURE(p.center_hz);
    CHECK(20.0 * std::log10(std::abs(proto.response(p.center_hz))) == doctest::Approx(-p.depth_db));
    auto half_power = [&](double f) { return std::abs(proto.response(f)) - std::sqrt(0.5); };
    const double lower = bisect(half_power, 1e-3, p.center_hz);
    const double upper = bisect(half_power, p.center_hz, 1e7);
    CHECK(upper - lower == doctest::Approx(p.bandwidth_hz).epsilon(1e-9));
    CHECK(std::abs(proto.response(1e-3)) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("bilinear realization maps prewarped analog frequencies") {
  const NotchParams p{750.0, 750.0, 20.0};
  const auto proto = notch_prototype(p);
  const auto biquad = realize_notch(p, kT);
  CHECK(biquad.denominator[0] == 1.0);
  const double w0 = 2.0 * std::numbers::pi * p.center_hz;
  const double K = w0 / std::tan(w0 * kT / 2.0);
  for (double f : {10.0, 200.0, 750.0, 1500.0, 3900.0}) {
    const double analog_hz = K * std::tan(std::numbers::pi * f * kT) / (2.0 * std::numbers::pi);
    CAPTURE(f);
    CHECK(std::abs(biquad.response(f) - proto.response(analog_hz)) < 1e-9);
  }
  // DC and Nyquist pass unchanged: b0+b1+b2 = 1+a1+a2 and b0-b1+b2 = 1-a1+a2.
  const auto& b = biquad.numerator;
  const auto& a = biquad.denominator;
  CHECK(b[0] + b[1] + b[2] == doctest::Approx(a[0] + a[1] + a[2]));
  CHECK(b[0] - b[1] + b[2] == doctest::Approx(a[0] - a[1] + a[2]));
}

TEST_CASE("published notch settings round-trip exactly") {
  for (const NotchParams p : {NotchParams{750.0, 750.0, 20.0}, NotchParams{450.0, 900.0, 23.5}}) {
    const auto biquad = realize_notch(p, kT);
    CHECK(to_db(biquad.response(p.center_hz)) == doctest::Approx(-p.depth_db).epsilon(1e-9));
    CHECK(biquad.pole_radius() < 1.0);
  }
}

TEST_CASE("infinite depth nulls the center") {
  const NotchParams p{753.0, 761.0, kInf};
  CHECK(p.infinite_depth());
  const auto biquad = realize_notch(p, kT);
  CHECK(std::abs(biquad.response(753.0)) < 1e-12);
  const auto proto = notch_prototype(p);
  CHECK(proto.zeta_numerator == 0.0);
}

TEST_CASE("depth threshold and sampling limits") {
  CHECK(error_of([] { NotchParams{750.0, 750.0, 3.0}.validate(); }) == "design");
  CHECK(error_of([] { NotchParams{750.0, 750.0, 10.0 * std::log10(2.0)}.validate(); }) == "design");
  CHECK(error_of([] { NotchParams{750.0, 750.0, 3.02}.validate(); }) == "none");
  CHECK(error_of([] { NotchParams{750.0, 0.0, 20.0}.validate(); }) == "invalid-input");
  CHECK(error_of([] { NotchParams{0.0, 10.0, 20.0}.validate(); }) == "invalid-input");
  CHECK(error_of([] { realize_notch(NotchParams{4000.0, 100.0, 20.0}, kT); }) == "sampling");
  const auto biquad = realize_notch(NotchParams{750.0, 750.0, 20.0}, kT);
  const std::vector<double> grid{100.0, 4000.0};
  CHECK(error_of([&] { notch_response(biquad, grid); }) == "range");
}

TEST_CASE("design from Bode features") {
  const auto finite = design_notch(features(750.0, 40.0), 1.0, DepthMode::kFiniteHalfGap, kT);
  CHECK(finite.params.center_hz == 750.0);
  CHECK(finite.params.bandwidth_hz == 750.0);
  CHECK(finite.params.depth_db == doctest::Approx(20.0));
  CHECK(to_db(finite.biquad.response(750.0)) == doctest::Approx(-20.0));

  const auto wide = design_notch(features(450.0, 47.0), 2.0, DepthMode::kFiniteHalfGap, kT);
  CHECK(wide.params.bandwidth_hz == 900.0);
  CHECK(wide.params.depth_db == doctest::Approx(23.5));

  const auto infinite = design_notch(features(750.0, 40.0), 1.0, DepthMode::kInfinite, kT);
  CHECK(infinite.params.infinite_depth());

  CHECK(error_of([] { design_notch(features(750.0, 40.0), 2.5, DepthMode::kInfinite, kT); }) ==
        "invalid-input");
  CHECK(error_of([] { design_notch(features(2000.0, 40.0), 1.0, DepthMode::kInfinite, kT); }) ==
        "sampling");
  // A gap of 6 dB would ask for a 3 dB notch, which cannot be realized.
  CHECK(error_of([] { design_notch(features(750.0, 6.0), 1.0, DepthMode::kFiniteHalfGap, kT); }) ==
        "design");
}

TEST_CASE("finite notch is transparent a decade away") {
  for (const double f_res : {450.0, 750.0}) {
    const auto design = design_notch(features(f_res, 40.0), 1.0, DepthMode::kFiniteHalfGap, kT);
    CHECK(std::abs(to_db(design.biquad.response(f_res / 10.0))) < 0.1);
    CHECK(std::abs(to_db(design.biquad.response(std::min(f_res * 10.0, 3999.0)))) < 0.1);
  }
}

TEST_CASE("filtering a tone matches the response") {
  const NotchParams p{750.0, 750.0, 20.0};
  const auto biquad = realize_notch(p, kT);
  for (double f : {200.0, 750.0, 1500.0}) {
    const double w = 2.0 * std::numbers::pi * f * kT;
    std::vector<double> x(16000);
    for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(w * static_cast<double>(n));
    const auto y = filter_apply(biquad, x);
    const Complex h = biquad.response(f);
    double worst = 0.0;
    for (std::size_t n = 8000; n < x.size(); ++n) {
      const double expected = std::abs(h) * std::sin(w * static_cast<double>(n) + std::arg(h));
      worst = std::max(worst, std::abs(y[n] - expected));
    }
    CAPTURE(f);
    CHECK(worst < 1e-9);
  }

  BiquadFilter filter(biquad);
  const std::vector<double> x{1.0, 0.0, -2.0, 0.5, 3.0};
  const auto batch = filter_apply(biquad, x);
  for (std::size_t n = 0; n < x.size(); ++n) CHECK(filter.process(x[n]) == batch[n]);
  filter.reset();
  CHECK(filter.process(x[0]) == batch[0]);
}

TEST_CASE("random valid notches are stable") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> center(20.0, 3900.0);
  std::uniform_real_distribution<double> ratio(0.05, 2.0);
  std::uniform_real_distribution<double> depth(3.1, 60.0);
  for (int i = 0; i < 500; ++i) {
    const double fc = center(rng);
    const double bw = ratio(rng) * fc;
    const double d = (i % 10 == 0) ? kInf : depth(rng);
    const auto biquad = realize_notch(NotchParams{fc, bw, d}, kT);
    REQUIRE(biquad.pole_radius() < 1.0);
  }
}
