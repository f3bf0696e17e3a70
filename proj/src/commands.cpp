#include "servotune/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "servotune/error.hpp"
#include "servotune/io.hpp"

namespace servotune {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json number_or_null(double value) { return std::isfinite(value) ? json(value) : json(nullptr); }

json number_or_null(const std::optional<double>& value) {
  return value ? number_or_null(*value) : json(nullptr);
}

json to_json(const PiGains& gains) { return {{"kp", gains.kp}, {"ti_s", gains.ti}}; }

json to_json(const std::optional<NotchParams>& notch) {
  if (!notch) return nullptr;
  return {{"center_hz", notch->center_hz},
          {"bandwidth_hz", notch->bandwidth_hz},
          {"depth_db", number_or_null(notch->depth_db)},
          {"infinite_depth", notch->infinite_depth()}};
}

json to_json(const MarginReport& m) {
  return {{"phase_margin_deg", number_or_null(m.phase_margin_deg)},
          {"gain_margin_db", number_or_null(m.gain_margin_db)},
          {"phase_crossover_hz", number_or_null(m.phase_crossover_hz)},
          {"gain_crossover_hz", number_or_null(m.gain_crossover_hz)},
          {"closed_loop_bandwidth_hz", number_or_null(m.closed_loop_bandwidth_hz)},
          {"sensitivity_peak_db", number_or_null(m.sensitivity_peak_db)},
          {"sensitivity_peak_hz", number_or_null(m.sensitivity_peak_hz)}};
}

json to_json(const StepMetrics& s) {
  return {{"overshoot_pct", number_or_null(s.overshoot_pct)},
          {"settling_time_s", number_or_null(s.settling_time_s)},
          {"itae", number_or_null(s.itae)},
          {"steady_state_reached", s.steady_state_reached}};
}

json to_json(const TuneResult& r) {
  return {{"gains", to_json(r.gains)},
          {"notch", to_json(r.notch)},
          {"desired_phase_margin_deg", r.desired_phase_margin_deg},
          {"f_minus180_hz", r.f_minus180_hz},
          {"initial_margin_reading_db", r.initial_margin_reading_db},
          {"reads",
           {{"crossover_frequency_hz", r.crossover_frequency_hz},
            {"magnitude_db", r.read_magnitude_db},
            {"phase_deg", r.read_phase_deg}}},
          {"phase_offset_deg", r.phase_offset_deg},
          {"achieved", to_json(r.achieved)},
          {"iterations", r.iterations_used}};
}

json to_json(const BodeFeatures& f) {
  return {{"f_resonance_hz", f.f_resonance},
          {"f_antiresonance_hz", f.f_antiresonance},
          {"peak_gap_db", f.peak_gap_db},
          {"f_minus180_hz", f.f_minus180},
          {"initial_margin_reading_db", f.initial_margin_reading_db}};
}

fs::path prepare_output_dir(const ProjectConfig& config) {
  const fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_json(const fs::path& path, const json& document) {
  write_file(path, [&](std::ostream& out) { out << document.dump(2) << "\n"; });
}

SimTrace load_trace(const std::optional<fs::path>& path) {
  std::ifstream in(*path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read trace " + path->string());
  return read_trace_csv(in);
}

std::string fmt(const char* pattern, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, pattern, value);
  return buffer;
}

/// Plant times notch on the plant grid.
FrequencyResponse with_notch(const FrequencyResponse& plant, const std::optional<NotchParams>& notch,
                             double sample_period) {
  if (!notch) return plant;
  const auto biquad = realize_notch(*notch, sample_period);
  const FrequencyResponse parts[] = {plant, notch_response(biquad, plant.frequencies)};
  return compose_loop(parts);
}

ControllerOutcome run_controller(const ProjectConfig& config, const FrequencyResponse& plant,
                                 std::string name, const PiGains& gains,
                                 const std::optional<NotchParams>& notch) {
  ControllerOutcome outcome;
  outcome.name = std::move(name);
  outcome.gains = gains;
  outcome.notch = notch;

  const double T = config.sample_period;
  const auto loop_plant = with_notch(plant, notch, T);
  const FrequencyResponse parts[] = {pi_response(gains, loop_plant.frequencies), loop_plant};
  outcome.margins = margins(compose_loop(parts));

  std::optional<NotchBiquad> biquad;
  if (notch) biquad = realize_notch(*notch, T);
  const auto reference = step_reference(config.step.reference, config.step.duration, T);
  try {
    outcome.trace = simulate_closed_loop(config.plant, gains, biquad, reference, T,
                                         ClosedLoopOptions{config.step.torque_limit});
    outcome.metrics = step_metrics(outcome.trace, config.step.reference);
    outcome.unstable = !outcome.metrics.steady_state_reached;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDivergence) throw;
    outcome.unstable = true;
    outcome.note = e.what();
    outcome.metrics.overshoot_pct = std::numeric_limits<double>::infinity();
    outcome.metrics.settling_time_s = std::numeric_limits<double>::infinity();
    outcome.metrics.itae = std::numeric_limits<double>::infinity();
    outcome.metrics.steady_state_reached = false;
  }
  return outcome;
}

}  // namespace

Identification identify(const ProjectConfig& config, const SimTrace* recorded) {
  Identification id;
  if (recorded) {
    id.trace = *recorded;
    id.trace.validate();
  } else {
    ExcitationSpec spec = config.excitation;
    if (spec.kind != ExcitationKind::kWhiteNoise) {
      throw Error(ErrorCode::kInvalidConfig, "identification needs a white_noise excitation");
    }
    id.trace = simulate(config.plant, spec, config.sample_period);
  }
  id.frf = estimate_frf(id.trace.torque_command, id.trace.motor_velocity, id.trace.sample_period,
                        config.welch.segment_length, config.welch.overlap_fraction);
  id.coherent_intervals = coherence_mask(id.frf, config.welch.coherence_threshold);
  id.features = extract_features(id.frf, config.welch.coherence_threshold);
  return id;
}

Tuning tune(const ProjectConfig& config, const SimTrace* recorded) {
  Tuning t;
  t.identification = identify(config, recorded);
  const double T = t.identification.trace.sample_period;
  t.notch = design_notch(t.identification.features, config.notch.bandwidth_factor,
                         config.notch.depth_mode, T);
  t.notched_plant = with_notch(t.identification.frf, t.notch.params, T);
  MarginSpec spec = config.margins;
  spec.coherence_threshold = config.welch.coherence_threshold;
  t.result = tune_pi(t.notched_plant, spec);
  t.result.notch = t.notch.params;
  return t;
}

Comparison compare(const ProjectConfig& config, const SimTrace* recorded) {
  Comparison c;
  c.tuning = tune(config, recorded);
  const auto& plant = c.tuning.identification.frf;
  c.controllers["PrM"] =
      run_controller(config, plant, "PrM", c.tuning.result.gains, c.tuning.notch.params);
  for (const auto& [name, baseline] : config.baselines) {
    c.controllers[name] = run_controller(config, plant, name, baseline.gains, baseline.notch);
  }
  if (config.relay.enabled) {
    c.relay = relay_tune(config.plant, config.relay.amplitude, config.relay.hysteresis,
                         config.sample_period, config.relay.duration);
    c.controllers["RF"] = run_controller(config, plant, "RF", c.relay->gains, std::nullopt);
  }
  return c;
}

void cmd_init(const ProjectConfig& config, const fs::path& path) {
  write_file(path, [&](std::ostream& out) { out << dump_config(config); });
}

Identification cmd_identify(const ProjectConfig& config, std::ostream& log,
                            const std::optional<fs::path>& trace_csv) {
  std::optional<SimTrace> recorded;
  if (trace_csv) recorded = load_trace(trace_csv);
  auto id = identify(config, recorded ? &*recorded : nullptr);
  const auto dir = prepare_output_dir(config);
  write_file(dir / "frf.csv", [&](std::ostream& out) { write_frf_csv(out, id.frf); });
  write_file(dir / "coherence_intervals.csv",
             [&](std::ostream& out) { write_intervals_csv(out, id.coherent_intervals); });
  const auto& f = id.features;
  log << "antiresonance  " << fmt("%.1f", f.f_antiresonance) << " Hz\n"
      << "resonance      " << fmt("%.1f", f.f_resonance) << " Hz\n"
      << "peak gap A_T   " << fmt("%.2f", f.peak_gap_db) << " dB\n"
      << "-180 crossing  " << fmt("%.1f", f.f_minus180) << " Hz ("
      << fmt("%.2f", f.initial_margin_reading_db) << " dB)\n"
      << "coherent bands " << id.coherent_intervals.size() << "\n";
  return id;
}

Tuning cmd_tune(const ProjectConfig& config, std::ostream& log,
                const std::optional<fs::path>& trace_csv) {
  const auto dir = prepare_output_dir(config);
  json report = {{"schema_version", kReportSchemaVersion}};
  try {
    std::optional<SimTrace> recorded;
    if (trace_csv) recorded = load_trace(trace_csv);
    auto t = tune(config, recorded ? &*recorded : nullptr);
    const double T = t.identification.trace.sample_period;

    report["status"] = "ok";
    report["features"] = to_json(t.identification.features);
    report["result"] = to_json(t.result);
    report["notch_biquad"] = {{"numerator", t.notch.biquad.numerator},
                              {"denominator", t.notch.biquad.denominator},
                              {"sample_period_s", T}};
    write_json(dir / "tune_report.json", report);

    const FrequencyResponse parts[] = {pi_response(t.result.gains, t.notched_plant.frequencies),
                                       t.notched_plant};
    const auto loop = compose_loop(parts);
    const auto s = sensitivity(loop);
    const auto comp = complementary_sensitivity(loop);
    write_file(dir / "loop_bode.csv", [&](std::ostream& out) { write_frf_csv(out, loop); });
    write_file(dir / "sensitivity.csv", [&](std::ostream& out) {
      out << "f_hz,s_db,t_db\n";
      for (std::size_t i = 0; i < loop.size(); ++i) {
        out << format_number(loop.frequencies[i]) << ',' << format_number(to_db(s.response[i]))
            << ',' << format_number(to_db(comp.response[i])) << '\n';
      }
    });
    write_file(dir / "notch_biquad.csv",
               [&](std::ostream& out) { write_biquad_csv(out, t.notch.biquad); });

    const auto& r = t.result;
    log << "notch   " << fmt("%.1f", r.notch->center_hz) << " Hz, BW "
        << fmt("%.1f", r.notch->bandwidth_hz) << " Hz, depth "
        << (r.notch->infinite_depth() ? std::string("inf") : fmt("%.2f", r.notch->depth_db))
        << " dB\n"
        << "PI      Kp " << fmt("%.4g", r.gains.kp) << ", Ti " << fmt("%.3f", r.gains.ti * 1e3)
        << " ms\n"
        << "reads   f_c " << fmt("%.1f", r.crossover_frequency_hz) << " Hz, A "
        << fmt("%.2f", r.read_magnitude_db) << " dB, phase " << fmt("%.2f", r.read_phase_deg)
        << " deg\n"
        << "margins PM " << fmt("%.2f", r.achieved.phase_margin_deg.value_or(NAN)) << " deg, AM "
        << fmt("%.2f", r.achieved.gain_margin_db.value_or(NAN)) << " dB after "
        << r.iterations_used << " iteration(s)\n";
    return t;
  } catch (const NonConvergenceError& e) {
    report["status"] = "error";
    report["error"] = std::string(error_name(e.code()));
    report["message"] = e.what();
    report["best_attempt"] = to_json(e.best_attempt());
    write_json(dir / "tune_report.json", report);
    throw;
  } catch (const Error& e) {
    report["status"] = "error";
    report["error"] = std::string(error_name(e.code()));
    report["message"] = e.what();
    write_json(dir / "tune_report.json", report);
    throw;
  }
}

SimTrace cmd_simulate(const ProjectConfig& config, std::ostream& log) {
  auto trace = simulate(config.plant, config.excitation, config.sample_period);
  const auto dir = prepare_output_dir(config);
  write_file(dir / "trace.csv", [&](std::ostream& out) { write_trace_csv(out, trace); });
  log << "simulated " << trace.size() << " samples at " << fmt("%.6g", 1.0 / config.sample_period)
      << " Hz into " << (dir / "trace.csv").string() << "\n";
  return trace;
}

Comparison cmd_compare(const ProjectConfig& config, std::ostream& log,
                       const std::optional<fs::path>& trace_csv) {
  std::optional<SimTrace> recorded;
  if (trace_csv) recorded = load_trace(trace_csv);
  auto c = compare(config, recorded ? &*recorded : nullptr);
  const auto dir = prepare_output_dir(config);

  json controllers = json::object();
  for (const auto& [name, o] : c.controllers) {
    if (!o.trace.motor_velocity.empty()) {
      write_file(dir / ("step_" + name + ".csv"),
                 [&](std::ostream& out) { write_trace_csv(out, o.trace); });
    }
    controllers[name] = {{"gains", to_json(o.gains)},
                         {"notch", to_json(o.notch)},
                         {"step", to_json(o.metrics)},
                         {"margins", to_json(o.margins)},
                         {"unstable", o.unstable}};
    if (!o.note.empty()) controllers[name]["note"] = o.note;
  }
  json document = {{"schema_version", kReportSchemaVersion},
                   {"reference_rad_s", config.step.reference},
                   {"duration_s", config.step.duration},
                   {"controllers", controllers}};
  if (c.relay) {
    document["relay"] = {{"ultimate_gain", c.relay->ultimate_gain},
                         {"ultimate_period_s", c.relay->ultimate_period_s},
                         {"limit_cycle_amplitude", c.relay->limit_cycle_amplitude}};
  }
  write_json(dir / "comparison.json", document);

  for (const auto& [name, o] : c.controllers) {
    log << name << std::string(name.size() < 6 ? 6 - name.size() : 1, ' ')
        << "overshoot " << fmt("%6.2f", o.metrics.overshoot_pct) << " %  settling "
        << fmt("%7.2f", o.metrics.settling_time_s * 1e3) << " ms  ITAE "
        << fmt("%.4g", o.metrics.itae) << (o.unstable ? "  UNSTABLE" : "") << "\n";
  }
  return c;
}

std::string cmd_report(const ProjectConfig& config, std::ostream& log) {
  const fs::path dir(config.output_dir);
  auto read_json = [&](const char* name) -> std::optional<json> {
    std::ifstream in(dir / name);
    if (!in) return std::nullopt;
    try {
      return json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kIo, std::string(name) + ": " + e.what());
    }
  };
  const auto tune_doc = read_json("tune_report.json");
  const auto compare_doc = read_json("comparison.json");
  if (!tune_doc && !compare_doc) {
    throw Error(ErrorCode::kIo, "no tune_report.json or comparison.json in " + dir.string() +
                                    "; run tune or compare first");
  }
  auto cell = [](const json& v, const char* pattern, double scale = 1.0) {
    return v.is_number() ? fmt(pattern, v.get<double>() * scale) : std::string("-");
  };

  std::ostringstream md;
  md << "# servotune report\n\n";
  if (tune_doc) {
    const auto& t = *tune_doc;
    if (t.value("status", "") == "ok") {
      const auto& r = t["result"];
      const auto& f = t["features"];
      md << "## Proposed tuning\n\n"
         << "| quantity | value |\n|---|---|\n"
         << "| resonance | " << cell(f["f_resonance_hz"], "%.1f Hz") << " |\n"
         << "| antiresonance | " << cell(f["f_antiresonance_hz"], "%.1f Hz") << " |\n"
         << "| peak gap | " << cell(f["peak_gap_db"], "%.2f dB") << " |\n"
         << "| -180 crossing | " << cell(f["f_minus180_hz"], "%.1f Hz") << " |\n"
         << "| Kp | " << cell(r["gains"]["kp"], "%.4g") << " |\n"
         << "| Ti | " << cell(r["gains"]["ti_s"], "%.3f ms", 1e3) << " |\n"
         << "| PM | " << cell(r["achieved"]["phase_margin_deg"], "%.2f deg") << " |\n"
         << "| AM | " << cell(r["achieved"]["gain_margin_db"], "%.2f dB") << " |\n"
         << "| iterations | " << r["iterations"].get<int>() << " |\n\n";
    } else {
      md << "## Proposed tuning\n\nTuning failed: " << t.value("error", "") << " ("
         << t.value("message", "") << ")\n\n";
    }
  }
  if (compare_doc) {
    md << "## Step comparison\n\n"
       << "| controller | Kp | Ti (ms) | PM (deg) | AM (dB) | BW_C (Hz) | overshoot (%) | "
          "settling (ms) | ITAE | stable |\n"
       << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& [name, c] : (*compare_doc)["controllers"].items()) {
      md << "| " << name << " | " << cell(c["gains"]["kp"], "%.4g") << " | "
         << cell(c["gains"]["ti_s"], "%.3f", 1e3) << " | "
         << cell(c["margins"]["phase_margin_deg"], "%.1f") << " | "
         << cell(c["margins"]["gain_margin_db"], "%.2f") << " | "
         << cell(c["margins"]["closed_loop_bandwidth_hz"], "%.1f") << " | "
         << cell(c["step"]["overshoot_pct"], "%.2f") << " | "
         << cell(c["step"]["settling_time_s"], "%.2f", 1e3) << " | "
         << cell(c["step"]["itae"], "%.4g") << " | "
         << (c["unstable"].get<bool>() ? "no" : "yes") << " |\n";
    }
  }
  const std::string text = md.str();
  write_file(dir / "report.md", [&](std::ostream& out) { out << text; });
  log << text;
  return text;
}

}  // namespace servotune
