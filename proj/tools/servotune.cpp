#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "servotune/commands.hpp"
#include "servotune/config.hpp"
#include "servotune/error.hpp"

namespace {

int exit_code(servotune::ErrorCode code) {
  using servotune::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidInput:
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kRange:
    case ErrorCode::kGrid:
    case ErrorCode::kSampling:
    case ErrorCode::kDesign:
    case ErrorCode::kInsufficientData:
      return 2;
    case ErrorCode::kNoCrossover:
    case ErrorCode::kNoResonance:
    case ErrorCode::kInfeasibleMargin:
    case ErrorCode::kPhaseInfeasible:
    case ErrorCode::kNoOscillation:
      return 3;
    case ErrorCode::kNonConvergence:
      return 4;
    case ErrorCode::kDivergence:
    case ErrorCode::kIo:
      return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Notch and PI loop shaping for two-mass servo drives"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string preset = "rigid";
  app.add_option("--config", config_path, "Project configuration file");
  app.add_option("--seed", seed, "Override the excitation seed");
  app.add_option("--out", out_dir, "Override the output directory");
  app.add_option("--preset", preset, "Built-in scenario used when no --config is given")
      ->check(CLI::IsMember({"rigid", "flexible"}));

  std::optional<std::string> trace_csv;
  bool force = false;
  auto* init = app.add_subcommand("init", "Write a configuration file with every default");
  init->add_flag("--force", force, "Overwrite an existing --config file");
  auto* identify = app.add_subcommand("identify", "Estimate the plant response and its features");
  auto* tune = app.add_subcommand("tune", "Design the notch and the PI gains");
  auto* simulate = app.add_subcommand("simulate", "Run the configured open-loop experiment");
  auto* compare = app.add_subcommand("compare", "Step responses of the proposed and baseline tunings");
  auto* report = app.add_subcommand("report", "Summarize tune and compare results as Markdown");
  for (auto* sub : {identify, tune, compare}) {
    sub->add_option("--trace", trace_csv, "Identify from a recorded trace CSV instead");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    using namespace servotune;
    const Scenario scenario = preset == "flexible" ? Scenario::kFlexible : Scenario::kRigid;
    ProjectConfig config = default_config(scenario);
    if (!config_path.empty() && !init->parsed()) config = load_config(config_path);
    if (seed) config.excitation.seed = *seed;
    if (!out_dir.empty()) config.output_dir = out_dir;
    config.validate();

    std::optional<std::filesystem::path> trace;
    if (trace_csv) trace = *trace_csv;

    if (init->parsed()) {
      if (config_path.empty()) {
        std::cout << dump_config(config);
      } else {
        if (std::filesystem::exists(config_path) && !force) {
          std::cerr << "servotune: " << config_path << " exists; pass --force to overwrite\n";
          return 1;
        }
        cmd_init(config, config_path);
        std::cout << "wrote " << config_path << "\n";
      }
    } else if (identify->parsed()) {
      cmd_identify(config, std::cout, trace);
    } else if (tune->parsed()) {
      cmd_tune(config, std::cout, trace);
    } else if (simulate->parsed()) {
      cmd_simulate(config, std::cout);
    } else if (compare->parsed()) {
      cmd_compare(config, std::cout, trace);
    } else if (report->parsed()) {
      cmd_report(config, std::cout);
    }
  } catch (const servotune::Error& e) {
    std::cerr << "servotune: " << servotune::error_name(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  }
  return 0;
}
