#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "servotune/frequency_response.hpp"
#include "servotune/notch.hpp"
#include "servotune/pi_gains.hpp"

namespace servotune {

/// Rotatory two-mass spring-damper: motor inertia coupled to a load inertia
/// through a torsional spring with damping, both sides with linear viscous
/// friction. Torque enters at the motor; velocity is measured at the motor.
struct TwoMassParams {
  double motor_inertia = 0.0;           ///< kg·m²
  double load_inertia = 0.0;            ///< kg·m²
  double stiffness = 0.0;               ///< N·m/rad
  double coupling_damping = 0.0;        ///< N·m·s/rad
  double motor_viscous_friction = 0.0;  ///< N·m·s/rad
  double load_viscous_friction = 0.0;   ///< N·m·s/rad
  /// First-order current-loop approximation; zero means ideal torque.
  double torque_lag_time_constant = 0.0;  ///< s
  /// Transport delay between torque command and the current loop (drive
  /// computation and PWM latency). Must be a whole number of samples when
  /// simulated.
  double torque_delay = 0.0;  ///< s

  void validate() const;

  /// Undamped resonance sqrt(k (Jm + Jl) / (Jm Jl)) / 2π.
  double resonance_hz() const;
  /// Undamped antiresonance sqrt(k / Jl) / 2π.
  double antiresonance_hz() const;
  double total_inertia() const { return motor_inertia + load_inertia; }
};

/// Load inertia that places the undamped resonance at `resonance_hz`.
double load_inertia_for_resonance(double motor_inertia, double stiffness, double resonance_hz);

/// Synthetic twins of the rigid and flexible coupling test benches.
TwoMassParams rigid_twin();
TwoMassParams flexible_twin();

/// Continuous state-space realization. States are motor velocity, load
/// velocity, twist angle and, when a torque lag is configured, delivered
/// torque. The transport delay is not part of the realization.
struct StateSpaceModel {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::RowVectorXd c;
};

StateSpaceModel state_space(const TwoMassParams& params);

/// Exact continuous torque→motor-velocity response, coherence one.
FrequencyResponse analytic_frf(const TwoMassParams& params, std::span<const double> frequencies);

/// Exact response of the sampled system seen by a drive: zero-order-held
/// torque command, velocity sampled at the same instants, delay in whole
/// samples. Frequencies must lie below Nyquist.
FrequencyResponse sampled_frf(const TwoMassParams& params, std::span<const double> frequencies,
                              double sample_period);

/// Discrete-time record. `reference` is empty for open-loop experiments.
struct SimTrace {
  double sample_period = 0.0;
  std::vector<double> torque_command;
  std::vector<double> reference;
  std::vector<double> motor_velocity;
  std::vector<double> load_velocity;
  std::vector<double> twist_angle;

  std::size_t size() const noexcept { return motor_velocity.size(); }
  double time(std::size_t index) const { return sample_period * static_cast<double>(index); }
  void validate() const;
};

enum class ExcitationKind { kWhiteNoise, kStep, kRelay };

struct ExcitationSpec {
  ExcitationKind kind = ExcitationKind::kWhiteNoise;
  double amplitude = 0.5;  ///< N·m (standard deviation for white noise), rad/s for a velocity step
  double duration = 2.0;   ///< s
  std::uint64_t seed = 1;
  double relay_hysteresis = 0.0;  ///< rad/s, relay only

  void validate() const;
};

/// Gaussian white noise with standard deviation `amplitude`.
std::vector<double> white_noise(double amplitude, std::size_t count, std::uint64_t seed);

/// Open-loop torque sequence for white-noise or step excitation.
std::vector<double> generate_excitation(const ExcitationSpec& spec, double sample_period);

/// Fixed-step RK4 integrator of the two-mass model with a held torque input.
class TwoMassSimulator {
 public:
  TwoMassSimulator(const TwoMassParams& params, double sample_period);

  /// Applies `torque_command` for one sample period.
  void step(double torque_command);

  double motor_velocity() const { return state_[0]; }
  double load_velocity() const { return state_[1]; }
  double twist_angle() const { return state_[2]; }
  std::size_t samples_taken() const { return samples_; }

  /// Kinetic plus spring energy.
  double mechanical_energy() const;

  void set_state(double motor_velocity, double load_velocity, double twist_angle);

 private:
  using State = std::array<double, 4>;
  State derivative(const State& x, double torque) const;

  TwoMassParams params_;
  double sample_period_;
  State state_{};
  std::deque<double> delay_line_;
  std::size_t samples_ = 0;
};

/// Open-loop response to an explicit torque sequence.
SimTrace simulate(const TwoMassParams& params, std::span<const double> torque,
                  double sample_period);

/// Open-loop white-noise or step experiment, or a relay-feedback experiment
/// on motor velocity around zero for ExcitationKind::kRelay.
SimTrace simulate(const TwoMassParams& params, const ExcitationSpec& excitation,
                  double sample_period);

struct ClosedLoopOptions {
  double torque_limit = 10.0;  ///< N·m, bound on the integral contribution
};

/// Discrete PI speed loop (backward-Euler integral) with optional notch on
/// the controller output.
SimTrace simulate_closed_loop(const TwoMassParams& params, const PiGains& gains,
                              const std::optional<NotchBiquad>& notch,
                              std::span<const double> reference, double sample_period,
                              const ClosedLoopOptions& options = {});

/// Constant reference of `value` for `duration` seconds, starting at t = 0.
std::vector<double> step_reference(double value, double duration, double sample_period);

}  // namespace servotune
