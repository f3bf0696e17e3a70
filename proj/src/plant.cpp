#include "servotune/plant.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "servotune/error.hpp"

namespace servotune {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDivergenceBound = 1e12;

std::size_t delay_samples(const TwoMassParams& params, double sample_period) {
  const double ratio = params.torque_delay / sample_period;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-6) {
    throw Error(ErrorCode::kSampling, "torque delay of " + std::to_string(params.torque_delay) +
                                          " s is not a whole number of samples");
  }
  return static_cast<std::size_t>(rounded);
}

void require_sample_period(const TwoMassParams& params, double sample_period) {
  if (!(sample_period > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "sample period must be positive");
  }
  if (sample_period > 1.0 / (10.0 * params.resonance_hz())) {
    throw Error(ErrorCode::kSampling,
                "sample period " + std::to_string(sample_period) +
                    " s is not 10x below the resonance period; resonance at " +
                    std::to_string(params.resonance_hz()) + " Hz");
  }
  if (params.torque_lag_time_constant > 0.0 &&
      sample_period > 2.5 * params.torque_lag_time_constant) {
    throw Error(ErrorCode::kSampling, "torque lag time constant too short for the sample period");
  }
}

}  // namespace

void TwoMassParams::validate() const {
  if (!(motor_inertia > 0.0) || !(load_inertia > 0.0) || !(stiffness > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "inertias and stiffness must be positive");
  }
  if (coupling_damping < 0.0 || motor_viscous_friction < 0.0 || load_viscous_friction < 0.0) {
    throw Error(ErrorCode::kInvalidInput, "damping and friction must be non-negative");
  }
  if (torque_lag_time_constant < 0.0 || torque_delay < 0.0) {
    throw Error(ErrorCode::kInvalidInput, "torque lag and delay must be non-negative");
  }
}

double TwoMassParams::resonance_hz() const {
  return std::sqrt(stiffness * (motor_inertia + load_inertia) / (motor_inertia * load_inertia)) /
         kTwoPi;
}

double TwoMassParams::antiresonance_hz() const {
  return std::sqrt(stiffness / load_inertia) / kTwoPi;
}

double load_inertia_for_resonance(double motor_inertia, double stiffness, double resonance_hz) {
  const double omega = kTwoPi * resonance_hz;
  const double remainder = omega * omega - stiffness / motor_inertia;
  if (!(remainder > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "resonance below the locked-load frequency sqrt(k/Jm)");
  }
  return stiffness / remainder;
}

// Coupling damping sets the resonance/antiresonance gap to 40 dB (rigid) and
// 47 dB (flexible); the 0.25 ms delay stands in for current-loop and
// computation latency of the drive.
TwoMassParams rigid_twin() {
  TwoMassParams p;
  p.motor_inertia = 2.9e-4;
  p.stiffness = 5118.0;
  p.load_inertia = load_inertia_for_resonance(p.motor_inertia, p.stiffness, 750.0);
  p.coupling_damping = 0.19;
  p.motor_viscous_friction = 1e-3;
  p.load_viscous_friction = 1e-3;
  p.torque_delay = 250e-6;
  return p;
}

TwoMassParams flexible_twin() {
  TwoMassParams p = rigid_twin();
  p.stiffness = 1828.0;
  p.coupling_damping = 0.0753;
  return p;
}

StateSpaceModel state_space(const TwoMassParams& params) {
  params.validate();
  const bool lag = params.torque_lag_time_constant > 0.0;
  const Eigen::Index n = lag ? 4 : 3;
  const double jm = params.motor_inertia;
  const double jl = params.load_inertia;
  const double k = params.stiffness;
  const double c = params.coupling_damping;

  StateSpaceModel model{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n),
                        Eigen::RowVectorXd::Zero(n)};
  auto& a = model.a;
  a(0, 0) = -(c + params.motor_viscous_friction) / jm;
  a(0, 1) = c / jm;
  a(0, 2) = -k / jm;
  a(1, 0) = c / jl;
  a(1, 1) = -(c + params.load_viscous_friction) / jl;
  a(1, 2) = k / jl;
  a(2, 0) = 1.0;
  a(2, 1) = -1.0;
  if (lag) {
    a(0, 3) = 1.0 / jm;
    a(3, 3) = -1.0 / params.torque_lag_time_constant;
    model.b(3) = 1.0 / params.torque_lag_time_constant;
  } else {
    model.b(0) = 1.0 / jm;
  }
  model.c(0) = 1.0;
  return model;
}

FrequencyResponse analytic_frf(const TwoMassParams& params, std::span<const double> frequencies) {
  require_frequency_grid(frequencies);
  const auto model = state_space(params);
  const Eigen::Index n = model.a.rows();
  const Eigen::MatrixXcd a = model.a.cast<Complex>();
  const Eigen::VectorXcd b = model.b.cast<Complex>();

  std::vector<Complex> response(frequencies.size());
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    const Complex s(0.0, kTwoPi * frequencies[i]);
    Eigen::MatrixXcd resolvent = s * Eigen::MatrixXcd::Identity(n, n) - a;
    const Eigen::VectorXcd x = resolvent.partialPivLu().solve(b);
    response[i] = x(0) * std::exp(-s * params.torque_delay);
  }
  return make_exact_response({frequencies.begin(), frequencies.end()}, std::move(response));
}

FrequencyResponse sampled_frf(const TwoMassParams& params, std::span<const double> frequencies,
                              double sample_period) {
  require_frequency_grid(frequencies);
  if (!(sample_period > 0.0)) throw Error(ErrorCode::kInvalidInput, "sample period must be positive");
  const double nyquist = 0.5 / sample_period;
  if (!frequencies.empty() && frequencies.back() >= nyquist) {
    throw Error(ErrorCode::kRange, "frequency at or above Nyquist");
  }
  const auto model = state_space(params);
  const std::size_t delay = delay_samples(params, sample_period);
  const Eigen::Index n = model.a.rows();

  // exp([[A, B], [0, 0]] T) = [[Ad, Bd], [0, 1]]
  Eigen::MatrixXd augmented = Eigen::MatrixXd::Zero(n + 1, n + 1);
  augmented.topLeftCorner(n, n) = model.a * sample_period;
  augmented.topRightCorner(n, 1) = model.b * sample_period;
  const Eigen::MatrixXd transition = augmented.exp();
  const Eigen::MatrixXcd ad = transition.topLeftCorner(n, n).cast<Complex>();
  const Eigen::VectorXcd bd = transition.topRightCorner(n, 1).cast<Complex>();

  std::vector<Complex> response(frequencies.size());
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    const Complex z = std::exp(Complex(0.0, kTwoPi * frequencies[i] * sample_period));
    Eigen::MatrixXcd resolvent = z * Eigen::MatrixXcd::Identity(n, n) - ad;
    const Eigen::VectorXcd x = resolvent.partialPivLu().solve(bd);
    response[i] = x(0) * std::pow(z, -static_cast<double>(delay));
  }
  return make_exact_response({frequencies.begin(), frequencies.end()}, std::move(response));
}

void SimTrace::validate() const {
  if (!(sample_period > 0.0)) throw Error(ErrorCode::kInvalidInput, "trace sample period must be positive");
  const std::size_t n = motor_velocity.size();
  if (torque_command.size() != n || load_velocity.size() != n || twist_angle.size() != n ||
      (!reference.empty() && reference.size() != n)) {
    throw Error(ErrorCode::kInvalidInput, "trace columns differ in length");
  }
}

void ExcitationSpec::validate() const {
  if (!(amplitude > 0.0)) throw Error(ErrorCode::kInvalidInput, "excitation amplitude must be > 0");
  if (!(duration > 0.0)) throw Error(ErrorCode::kInvalidInput, "excitation duration must be > 0");
  if (relay_hysteresis < 0.0) throw Error(ErrorCode::kInvalidInput, "relay hysteresis must be >= 0");
}

std::vector<double> white_noise(double amplitude, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, amplitude);
  std::vector<double> out(count);
  for (double& v : out) v = normal(rng);
  return out;
}

namespace {

std::size_t sample_count(double duration, double sample_period) {
  return static_cast<std::size_t>(std::llround(duration / sample_period));
}

}  // namespace

std::vector<double> generate_excitation(const ExcitationSpec& spec, double sample_period) {
  spec.validate();
  const std::size_t n = sample_count(spec.duration, sample_period);
  switch (spec.kind) {
    case ExcitationKind::kWhiteNoise:
      return white_noise(spec.amplitude, n, spec.seed);
    case ExcitationKind::kStep:
      return std::vector<double>(n, spec.amplitude);
    case ExcitationKind::kRelay:
      break;
  }
  throw Error(ErrorCode::kInvalidInput, "relay excitation depends on feedback; use simulate()");
}

std::vector<double> step_reference(double value, double duration, double sample_period) {
  return std::vector<double>(sample_count(duration, sample_period), value);
}

TwoMassSimulator::TwoMassSimulator(const TwoMassParams& params, double sample_period)
    : params_(params), sample_period_(sample_period) {
  params_.validate();
  require_sample_period(params_, sample_period);
  delay_line_.assign(delay_samples(params_, sample_period), 0.0);
}

TwoMassSimulator::State TwoMassSimulator::derivative(const State& x, double torque) const {
  const double jm = params_.motor_inertia;
  const double jl = params_.load_inertia;
  const bool lag = params_.torque_lag_time_constant > 0.0;
  const double delivered = lag ? x[3] : torque;
  const double coupling = params_.stiffness * x[2] + params_.coupling_damping * (x[0] - x[1]);
  State dx{};
  dx[0] = (delivered - coupling - params_.motor_viscous_friction * x[0]) / jm;
  dx[1] = (coupling - params_.load_viscous_friction * x[1]) / jl;
  dx[2] = x[0] - x[1];
  dx[3] = lag ? (torque - x[3]) / params_.torque_lag_time_constant : 0.0;
  return dx;
}

void TwoMassSimulator::step(double torque_command) {
  double applied = torque_command;
  if (!delay_line_.empty()) {
    delay_line_.push_back(torque_command);
    applied = delay_line_.front();
    delay_line_.pop_front();
  }

  const double h = sample_period_;
  auto axpy = [](const State& x, const State& d, double s) {
    State out;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + s * d[i];
    return out;
  };
  const State k1 = derivative(state_, applied);
  const State k2 = derivative(axpy(state_, k1, h / 2), applied);
  const State k3 = derivative(axpy(state_, k2, h / 2), applied);
  const State k4 = derivative(axpy(state_, k3, h), applied);
  for (std::size_t i = 0; i < state_.size(); ++i) {
    state_[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  ++samples_;
  for (double v : state_) {
    if (!std::isfinite(v) || std::abs(v) > kDivergenceBound) {
      throw Error(ErrorCode::kDivergence,
                  "simulation diverged at sample " + std::to_string(samples_));
    }
  }
}

double TwoMassSimulator::mechanical_energy() const {
  return 0.5 * params_.motor_inertia * state_[0] * state_[0] +
         0.5 * params_.load_inertia * state_[1] * state_[1] +
         0.5 * params_.stiffness * state_[2] * state_[2];
}

void TwoMassSimulator::set_state(double motor_velocity, double load_velocity, double twist_angle) {
  state_[0] = motor_velocity;
  state_[1] = load_velocity;
  state_[2] = twist_angle;
}

namespace {

SimTrace empty_trace(double sample_period, std::size_t n, bool closed_loop) {
  SimTrace trace;
  trace.sample_period = sample_period;
  trace.torque_command.reserve(n);
  trace.motor_velocity.reserve(n);
  trace.load_velocity.reserve(n);
  trace.twist_angle.reserve(n);
  if (closed_loop) trace.reference.reserve(n);
  return trace;
}

void record(SimTrace& trace, const TwoMassSimulator& sim, double torque) {
  trace.torque_command.push_back(torque);
  trace.motor_velocity.push_back(sim.motor_velocity());
  trace.load_velocity.push_back(sim.load_velocity());
  trace.twist_angle.push_back(sim.twist_angle());
}

}  // namespace

SimTrace simulate(const TwoMassParams& params, std::span<const double> torque,
                  double sample_period) {
  TwoMassSimulator sim(params, sample_period);
  SimTrace trace = empty_trace(sample_period, torque.size(), false);
  for (double u : torque) {
    record(trace, sim, u);
    sim.step(u);
  }
  return trace;
}

SimTrace simulate(const TwoMassParams& params, const ExcitationSpec& excitation,
                  double sample_period) {
  if (excitation.kind != ExcitationKind::kRelay) {
    return simulate(params, generate_excitation(excitation, sample_period), sample_period);
  }
  excitation.validate();
  const std::size_t n = sample_count(excitation.duration, sample_period);
  TwoMassSimulator sim(params, sample_period);
  SimTrace trace = empty_trace(sample_period, n, false);
  double output = excitation.amplitude;
  for (std::size_t i = 0; i < n; ++i) {
    const double error = -sim.motor_velocity();
    if (error > excitation.relay_hysteresis) {
      output = excitation.amplitude;
    } else if (error < -excitation.relay_hysteresis) {
      output = -excitation.amplitude;
    }
    record(trace, sim, output);
    sim.step(output);
  }
  return trace;
}

SimTrace simulate_closed_loop(const TwoMassParams& params, const PiGains& gains,
                              const std::optional<NotchBiquad>& notch,
                              std::span<const double> reference, double sample_period,
                              const ClosedLoopOptions& options) {
  gains.validate();
  if (!(options.torque_limit > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "torque limit must be positive");
  }
  TwoMassSimulator sim(params, sample_period);
  std::optional<BiquadFilter> filter;
  if (notch) filter.emplace(*notch);

  SimTrace trace = empty_trace(sample_period, reference.size(), true);
  const double integral_limit = options.torque_limit / gains.kp;
  double integral = 0.0;
  for (double r : reference) {
    const double error = r - sim.motor_velocity();
    integral = std::clamp(integral + error * sample_period / gains.ti, -integral_limit,
                          integral_limit);
    double torque = gains.kp * (error + integral);
    if (filter) torque = filter->process(torque);
    trace.reference.push_back(r);
    record(trace, sim, torque);
    sim.step(torque);
  }
  return trace;
}

}  // namespace servotune
