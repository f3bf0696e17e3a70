#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "servotune/analysis.hpp"
#include "servotune/config.hpp"
#include "servotune/notch.hpp"
#include "servotune/pitune.hpp"
#include "servotune/sysid.hpp"

namespace servotune {

inline constexpr int kReportSchemaVersion = 1;

struct Identification {
  SimTrace trace;
  FrequencyResponse frf;
  std::vector<FrequencyInterval> coherent_intervals;
  BodeFeatures features;
};

struct Tuning {
  Identification identification;
  NotchDesign notch;
  FrequencyResponse notched_plant;
  TuneResult result;
};

struct ControllerOutcome {
  std::string name;
  PiGains gains;
  std::optional<NotchParams> notch;
  StepMetrics metrics;
  MarginReport margins;
  bool unstable = false;
  std::string note;  ///< e.g. the divergence message
  SimTrace trace;
};

struct Comparison {
  Tuning tuning;
  std::optional<RelayResult> relay;
  std::map<std::string, ControllerOutcome> controllers;
};

// Pipelines. They touch no files.

/// White-noise experiment on the configured plant, or `recorded` when given.
Identification identify(const ProjectConfig& config, const SimTrace* recorded = nullptr);
Tuning tune(const ProjectConfig& config, const SimTrace* recorded = nullptr);
/// Closed-loop step of the proposed tuning, every baseline and the relay
/// tuner. Divergent simulations are kept as unstable entries.
Comparison compare(const ProjectConfig& config, const SimTrace* recorded = nullptr);

// Verbs. Each writes its artifacts under config.output_dir and a short
// summary to `log`.

void cmd_init(const ProjectConfig& config, const std::filesystem::path& path);
Identification cmd_identify(const ProjectConfig& config, std::ostream& log,
                            const std::optional<std::filesystem::path>& trace_csv = {});
/// On a tuning error the report is still written with the error name, then
/// the error is rethrown.
Tuning cmd_tune(const ProjectConfig& config, std::ostream& log,
                const std::optional<std::filesystem::path>& trace_csv = {});
SimTrace cmd_simulate(const ProjectConfig& config, std::ostream& log);
Comparison cmd_compare(const ProjectConfig& config, std::ostream& log,
                       const std::optional<std::filesystem::path>& trace_csv = {});
/// Renders tune_report.json and comparison.json from output_dir as Markdown.
std::string cmd_report(const ProjectConfig& config, std::ostream& log);

}  // namespace servotune
