#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "servotune/commands.hpp"
#include "servotune/config.hpp"
#include "support.hpp"

using namespace servotune;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() /
                   ("servotune_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  return json::parse(in);
}

ProjectConfig config_in(Scenario scenario, const fs::path& dir) {
  auto config = default_config(scenario);
  config.output_dir = dir.string();
  return config;
}

int run_cli(const std::string& arguments) {
  const std::string command = std::string(SERVOTUNE_CLI) + " " + arguments + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ProjectConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace

TEST_CASE("config text round-trips") {
  for (auto scenario : {Scenario::kRigid, Scenario::kFlexible}) {
    const auto config = default_config(scenario);
    const std::string text = dump_config(config);
    const auto back = parse(text);
    CHECK(dump_config(back) == text);
    CHECK(back.plant.load_inertia == doctest::Approx(config.plant.load_inertia).epsilon(1e-9));
    CHECK(back.baselines.size() == config.baselines.size());
    CHECK(back.baselines.at("AT").notch->infinite_depth());
  }
}

TEST_CASE("config parsing is strict") {
  CHECK(error_of([] { parse("[plant]\nmass = 1\n"); }) == "invalid-config");
  CHECK(error_of([] { parse("sample_period = fast\n"); }) == "invalid-config");
  CHECK(error_of([] { parse("sample_period = 1e-4\nsample_period = 1e-4\n"); }) == "invalid-config");
  CHECK(error_of([] { parse("[margins\n"); }) == "invalid-config");
  CHECK(error_of([] { parse("just words\n"); }) == "invalid-config");
  CHECK(error_of([] { parse("[margins]\nphase_margin_deg = 60\ndamping_ratio = 0.5\n"); }) ==
        "invalid-config");
  CHECK(error_of([] { parse("[notch]\nbandwidth_factor = 3\n"); }) == "invalid-config");
  CHECK(error_of([] { parse("[baselines.X]\nkp = 1\nti = 0\n"); }) == "invalid-config");

  const auto zeta = parse("[margins]\ndamping_ratio = 0.5  # instead of a phase margin\n");
  CHECK_FALSE(zeta.margins.phase_margin_deg);
  CHECK(zeta.margins.desired_phase_margin_deg() == doctest::Approx(51.83).epsilon(0.01 / 51.83));

  const auto named = parse("[baselines.mine]\nkp = 0.5\nti = 0.01\nnotch_center_hz = 700\n"
                           "notch_bandwidth_hz = 700\nnotch_depth_db = inf\n");
  REQUIRE(named.baselines.contains("mine"));
  CHECK(named.baselines.at("mine").notch->infinite_depth());
}

TEST_CASE("identify reports the twin resonances") {
  for (auto [scenario, expected] : {std::pair{Scenario::kRigid, 750.0}, {Scenario::kFlexible, 450.0}}) {
    const auto dir = scratch(expected == 750.0 ? "identify_rigid" : "identify_flexible");
    const auto config = config_in(scenario, dir);
    std::ostringstream log;
    const auto id = cmd_identify(config, log);
    const double bin = 1.0 / (config.sample_period * static_cast<double>(config.welch.segment_length));
    CHECK(std::abs(id.features.f_resonance - expected) <= bin);
    CHECK(fs::exists(dir / "frf.csv"));
    CHECK(fs::exists(dir / "coherence_intervals.csv"));
    CHECK(log.str().find("resonance") != std::string::npos);
    CHECK(slurp(dir / "frf.csv").rfind("f_hz,mag_db,phase_deg,coherence\n", 0) == 0);
  }
}

TEST_CASE("identification output is byte-identical across runs") {
  const auto a = scratch("repeat_a");
  const auto b = scratch("repeat_b");
  std::ostringstream log;
  cmd_identify(config_in(Scenario::kRigid, a), log);
  cmd_identify(config_in(Scenario::kRigid, b), log);
  CHECK(slurp(a / "frf.csv") == slurp(b / "frf.csv"));
  CHECK(slurp(a / "coherence_intervals.csv") == slurp(b / "coherence_intervals.csv"));
}

TEST_CASE("identify from a recorded trace") {
  const auto dir = scratch("recorded");
  std::ostringstream log;
  const auto config = config_in(Scenario::kRigid, dir);
  cmd_simulate(config, log);
  const auto from_file = cmd_identify(config, log, dir / "trace.csv");
  const auto direct = identify(config);
  CHECK(from_file.features.f_resonance == direct.features.f_resonance);
  CHECK(from_file.features.peak_gap_db == doctest::Approx(direct.features.peak_gap_db).epsilon(1e-6));
}

TEST_CASE("tune writes a versioned report") {
  const auto dir = scratch("tune");
  std::ostringstream log;
  cmd_tune(config_in(Scenario::kRigid, dir), log);
  const auto report = read_json(dir / "tune_report.json");
  CHECK(report["schema_version"] == kReportSchemaVersion);
  CHECK(report["status"] == "ok");
  const auto& r = report["result"];
  CHECK(std::abs(r["achieved"]["phase_margin_deg"].get<double>() - 65.0) <= 2.0);
  CHECK(r["gains"]["kp"].get<double>() > 0.0);
  CHECK(r["reads"]["crossover_frequency_hz"].get<double>() > 0.0);
  CHECK(r["iterations"].get<int>() >= 1);
  CHECK(r["notch"]["depth_db"].is_number());
  for (const char* name : {"loop_bode.csv", "sensitivity.csv", "notch_biquad.csv"}) {
    CHECK(fs::exists(dir / name));
  }
}

TEST_CASE("damping ratio requirement is recorded") {
  const auto dir = scratch("tune_zeta");
  auto config = config_in(Scenario::kRigid, dir);
  config.margins.phase_margin_deg.reset();
  config.margins.damping_ratio = 0.5;
  std::ostringstream log;
  try {
    cmd_tune(config, log);
  } catch (const Error&) {
  }
  const auto report = read_json(dir / "tune_report.json");
  const auto& r = report["status"] == "ok" ? report["result"] : report["best_attempt"];
  CHECK(r["desired_phase_margin_deg"].get<double>() == doctest::Approx(51.83).epsilon(0.01 / 51.83));
}

TEST_CASE("compare orders the rigid-bench controllers") {
  const auto dir = scratch("compare_rigid");
  std::ostringstream log;
  const auto c = cmd_compare(config_in(Scenario::kRigid, dir), log);
  const auto& prm = c.controllers.at("PrM").metrics;
  const auto& rf = c.controllers.at("RF").metrics;
  const auto& ar = c.controllers.at("AR").metrics;
  CHECK(prm.overshoot_pct < rf.overshoot_pct);
  CHECK(prm.itae < rf.itae);
  CHECK(prm.settling_time_s < ar.settling_time_s);
  for (const char* name : {"PrM", "RF", "AR", "AT"}) {
    CHECK(fs::exists(dir / (std::string("step_") + name + ".csv")));
  }
  const auto doc = read_json(dir / "comparison.json");
  CHECK(doc["schema_version"] == kReportSchemaVersion);
  CHECK(doc["controllers"]["PrM"]["unstable"] == false);
}

TEST_CASE("autotune gains destabilize the flexible twin") {
  const auto dir = scratch("compare_flexible");
  std::ostringstream log;
  const auto c = cmd_compare(config_in(Scenario::kFlexible, dir), log);
  CHECK(c.controllers.at("AT").unstable);
  CHECK_FALSE(c.controllers.at("AT").metrics.steady_state_reached);
  CHECK_FALSE(c.controllers.at("PrM").unstable);
  const auto doc = read_json(dir / "comparison.json");
  CHECK(doc["controllers"]["AT"]["unstable"] == true);
}

TEST_CASE("a controller compared with itself gives identical metrics") {
  const auto dir = scratch("compare_self");
  auto config = config_in(Scenario::kRigid, dir);
  config.relay.enabled = false;
  config.baselines.clear();
  config.baselines["A"] = {PiGains{0.5, 0.01}, NotchParams{750.0, 750.0, 20.0}};
  config.baselines["B"] = config.baselines["A"];
  std::ostringstream log;
  const auto c = cmd_compare(config, log);
  const auto& a = c.controllers.at("A");
  const auto& b = c.controllers.at("B");
  CHECK(a.metrics.overshoot_pct == b.metrics.overshoot_pct);
  CHECK(a.metrics.settling_time_s == b.metrics.settling_time_s);
  CHECK(a.metrics.itae == b.metrics.itae);
  CHECK(*a.margins.phase_margin_deg == *b.margins.phase_margin_deg);
  CHECK(slurp(dir / "step_A.csv") == slurp(dir / "step_B.csv"));
}

TEST_CASE("comparison does not depend on the output directory") {
  const auto a = scratch("where_a");
  const auto b = scratch("where_b");
  std::ostringstream log;
  cmd_compare(config_in(Scenario::kRigid, a), log);
  cmd_compare(config_in(Scenario::kRigid, b), log);
  CHECK(read_json(a / "comparison.json") == read_json(b / "comparison.json"));
}

TEST_CASE("report renders saved results") {
  const auto dir = scratch("report");
  const auto config = config_in(Scenario::kRigid, dir);
  std::ostringstream log;
  CHECK(error_of([&] { cmd_report(config, log); }) == "io");
  cmd_tune(config, log);
  cmd_compare(config, log);
  const auto text = cmd_report(config, log);
  CHECK(text.find("| PrM |") != std::string::npos);
  CHECK(fs::exists(dir / "report.md"));
}

TEST_CASE("command-line exit codes") {
  const auto dir = scratch("cli");
  const std::string out = "--out " + (dir / "out").string();
  CHECK(run_cli("--config " + (dir / "project.toml").string() + " init") == 0);
  CHECK(fs::exists(dir / "project.toml"));
  CHECK(run_cli("--config " + (dir / "project.toml").string() + " init") != 0);
  CHECK(run_cli("--config " + (dir / "project.toml").string() + " init --force") == 0);
  CHECK(run_cli("--config " + (dir / "project.toml").string() + " " + out + " identify") == 0);
  CHECK(run_cli("--config " + (dir / "missing.toml").string() + " identify") == 2);
  CHECK(run_cli("--preset flexible " + out + " --seed 3 tune") == 0);
  CHECK(run_cli("frobnicate") != 0);

  SUBCASE("short record with a long segment") {
    std::ofstream(dir / "short.toml") << "[excitation]\nduration = 1\n[welch]\nsegment_length = 16384\n";
    CHECK(run_cli("--config " + (dir / "short.toml").string() + " " + out + " identify") == 2);
  }
  SUBCASE("plant without transport delay has no -180 crossing") {
    std::ofstream(dir / "nodelay.toml") << "[plant]\ntorque_delay = 0\n";
    CHECK(run_cli("--config " + (dir / "nodelay.toml").string() + " " + out + " tune") == 3);
    const auto report = read_json(dir / "out" / "tune_report.json");
    CHECK(report["status"] == "error");
    CHECK(report["error"] == "no-crossover");
  }
  SUBCASE("unreachable tolerance") {
    std::ofstream(dir / "tight.toml")
        << "[margins]\namplitude_margin_db = 5.4\nphase_margin_deg = 65\npm_tolerance_deg = 1e-9\n"
           "am_tolerance_db = 1e-9\n";
    CHECK(run_cli("--config " + (dir / "tight.toml").string() + " " + out + " tune") == 4);
    const auto report = read_json(dir / "out" / "tune_report.json");
    CHECK(report["error"] == "non-convergence");
    CHECK(report["best_attempt"]["gains"]["kp"].is_number());
  }
}
