#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "servotune/notch.hpp"
#include "servotune/pitune.hpp"
#include "servotune/plant.hpp"

namespace servotune {

struct WelchSettings {
  std::size_t segment_length = 2048;
  double overlap_fraction = 0.5;
  double coherence_threshold = 0.95;
};

struct NotchSettings {
  double bandwidth_factor = 1.0;
  DepthMode depth_mode = DepthMode::kFiniteHalfGap;
};

/// A fixed-gain controller to compare against, with its own notch (if any).
struct BaselineController {
  PiGains gains;
  std::optional<NotchParams> notch;
};

struct RelaySettings {
  bool enabled = true;
  double amplitude = 1.0;   ///< N·m
  double hysteresis = 0.5;  ///< rad/s
  double duration = 0.5;    ///< s
};

struct StepSettings {
  double reference = 100.0;  ///< rad/s
  double duration = 0.2;     ///< s
  double torque_limit = 10.0;
};

struct ProjectConfig {
  TwoMassParams plant;
  ExcitationSpec excitation;
  WelchSettings welch;
  NotchSettings notch;
  MarginSpec margins;
  std::map<std::string, BaselineController> baselines;
  RelaySettings relay;
  StepSettings step;
  double sample_period = 125e-6;
  std::string output_dir = "out";

  void validate() const;
};

enum class Scenario { kRigid, kFlexible };

/// Bench scenarios with the baseline gains of the comparison study.
ProjectConfig default_config(Scenario scenario = Scenario::kRigid);

/// Flat `key = value` text with `[section]` / `[section.sub]` headers and
/// `#` comments. Unknown keys are rejected. Missing keys keep the rigid
/// defaults.
ProjectConfig parse_config(std::istream& in);
ProjectConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ProjectConfig& config);

}  // namespace servotune
