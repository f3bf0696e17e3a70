#include "servotune/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "servotune/error.hpp"
#include "servotune/io.hpp"

namespace servotune {
namespace {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r");
  return std::string(text.substr(first, last - first + 1));
}

std::string unquote(std::string value) {
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
    return value.substr(1, value.size() - 2);
  }
  return value;
}

class Entries {
 public:
  void add(const std::string& key, std::string value, int line) {
    if (!values_.emplace(key, Value{std::move(value), line}).second) {
      throw Error(ErrorCode::kInvalidConfig, "line " + std::to_string(line) + ": duplicate key " + key);
    }
  }

  std::optional<std::string> take(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    std::string v = std::move(it->second.text);
    values_.erase(it);
    return v;
  }

  void number(const std::string& key, double& target) {
    if (auto v = take(key)) target = parse_number(key, *v);
  }

  void count(const std::string& key, std::size_t& target) {
    if (auto v = take(key)) {
      const double d = parse_number(key, *v);
      if (d < 0.0 || d != std::floor(d)) bad(key, *v);
      target = static_cast<std::size_t>(d);
    }
  }

  void integer(const std::string& key, int& target) {
    if (auto v = take(key)) {
      const double d = parse_number(key, *v);
      if (d != std::floor(d)) bad(key, *v);
      target = static_cast<int>(d);
    }
  }

  void boolean(const std::string& key, bool& target) {
    if (auto v = take(key)) {
      if (*v == "true") target = true;
      else if (*v == "false") target = false;
      else bad(key, *v);
    }
  }

  void text(const std::string& key, std::string& target) {
    if (auto v = take(key)) target = unquote(*v);
  }

  std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (k.rfind(prefix, 0) == 0) out.push_back(k);
    }
    return out;
  }

  void require_consumed() const {
    if (!values_.empty()) {
      const auto& [key, value] = *values_.begin();
      throw Error(ErrorCode::kInvalidConfig,
                  "line " + std::to_string(value.line) + ": unknown key " + key);
    }
  }

  static double parse_number(const std::string& key, const std::string& raw) {
    const std::string v = unquote(raw);
    if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) bad(key, raw);
      return d;
    } catch (const std::logic_error&) {
      bad(key, raw);
    }
  }

  [[noreturn]] static void bad(const std::string& key, const std::string& raw) {
    throw Error(ErrorCode::kInvalidConfig, "invalid value '" + raw + "' for " + key);
  }

 private:
  struct Value {
    std::string text;
    int line;
  };
  std::map<std::string, Value> values_;
};

BaselineController baseline(double kp, double ti, std::optional<NotchParams> notch) {
  return {PiGains{kp, ti}, notch};
}

}  // namespace

void ProjectConfig::validate() const {
  try {
    plant.validate();
    excitation.validate();
    margins.validate();
    if (!(sample_period > 0.0)) throw Error(ErrorCode::kInvalidInput, "sample_period must be > 0");
    if (!(notch.bandwidth_factor >= 1.0 && notch.bandwidth_factor <= 2.0)) {
      throw Error(ErrorCode::kInvalidInput, "notch.bandwidth_factor must lie in [1, 2]");
    }
    if (!(welch.overlap_fraction >= 0.0 && welch.overlap_fraction < 1.0)) {
      throw Error(ErrorCode::kInvalidInput, "welch.overlap_fraction must lie in [0, 1)");
    }
    if (!(welch.coherence_threshold >= 0.0 && welch.coherence_threshold <= 1.0)) {
      throw Error(ErrorCode::kInvalidInput, "welch.coherence_threshold must lie in [0, 1]");
    }
    for (const auto& [name, b] : baselines) {
      b.gains.validate();
      if (b.notch) b.notch->validate();
    }
    if (relay.enabled && baselines.contains("RF")) {
      throw Error(ErrorCode::kInvalidInput, "baseline name RF is reserved for the relay tuner");
    }
    if (!(step.reference > 0.0) || !(step.duration > 0.0) || !(step.torque_limit > 0.0)) {
      throw Error(ErrorCode::kInvalidInput, "step reference, duration and torque limit must be > 0");
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidConfig) throw;
    throw Error(ErrorCode::kInvalidConfig, e.what());
  }
}

ProjectConfig default_config(Scenario scenario) {
  ProjectConfig config;
  config.excitation.kind = ExcitationKind::kWhiteNoise;
  config.excitation.amplitude = 0.5;
  config.excitation.duration = 2.0;
  config.excitation.seed = 1;
  config.margins.phase_margin_deg = 65.0;
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Autotune gains from the rigid bench; on the flexible bench they serve as
  // the known-unstable reference.
  const auto autotune = baseline(1.05, 8.39e-3, NotchParams{753.0, 761.0, inf});
  if (scenario == Scenario::kRigid) {
    config.plant = rigid_twin();
    config.notch.bandwidth_factor = 1.0;
    config.margins.amplitude_margin_db = 5.4;
    config.baselines["AR"] = baseline(0.369, 4.69e-3, NotchParams{750.0, 750.0, 20.0});
    config.baselines["AT"] = autotune;
    config.output_dir = "out/rigid";
  } else {
    config.plant = flexible_twin();
    config.notch.bandwidth_factor = 2.0;
    config.margins.amplitude_margin_db = 10.0;
    config.baselines["AR"] = baseline(0.236, 7.79e-3, NotchParams{450.0, 900.0, 23.5});
    config.baselines["AT"] = autotune;
    config.output_dir = "out/flexible";
  }
  return config;
}

ProjectConfig parse_config(std::istream& in) {
  Entries entries;
  std::string section;
  std::string raw;
  int line_number = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error(ErrorCode::kInvalidConfig, "line " + std::to_string(line_number) + ": bad section");
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidConfig,
                  "line " + std::to_string(line_number) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    entries.add(section.empty() ? key : section + "." + key,
                trim(std::string_view(line).substr(eq + 1)), line_number);
  }

  ProjectConfig config = default_config(Scenario::kRigid);
  config.baselines.clear();

  entries.number("sample_period", config.sample_period);
  entries.text("output_dir", config.output_dir);

  auto& p = config.plant;
  entries.number("plant.motor_inertia", p.motor_inertia);
  entries.number("plant.load_inertia", p.load_inertia);
  entries.number("plant.stiffness", p.stiffness);
  entries.number("plant.coupling_damping", p.coupling_damping);
  entries.number("plant.motor_viscous_friction", p.motor_viscous_friction);
  entries.number("plant.load_viscous_friction", p.load_viscous_friction);
  entries.number("plant.torque_lag_time_constant", p.torque_lag_time_constant);
  entries.number("plant.torque_delay", p.torque_delay);

  auto& x = config.excitation;
  if (auto kind = entries.take("excitation.kind")) {
    const std::string k = unquote(*kind);
    if (k == "white_noise") x.kind = ExcitationKind::kWhiteNoise;
    else if (k == "step") x.kind = ExcitationKind::kStep;
    else if (k == "relay") x.kind = ExcitationKind::kRelay;
    else Entries::bad("excitation.kind", *kind);
  }
  entries.number("excitation.amplitude", x.amplitude);
  entries.number("excitation.duration", x.duration);
  entries.number("excitation.relay_hysteresis", x.relay_hysteresis);
  if (auto seed = entries.take("excitation.seed")) {
    const double d = Entries::parse_number("excitation.seed", *seed);
    if (d < 0.0 || d != std::floor(d)) Entries::bad("excitation.seed", *seed);
    x.seed = static_cast<std::uint64_t>(d);
  }

  entries.count("welch.segment_length", config.welch.segment_length);
  entries.number("welch.overlap_fraction", config.welch.overlap_fraction);
  entries.number("welch.coherence_threshold", config.welch.coherence_threshold);

  entries.number("notch.bandwidth_factor", config.notch.bandwidth_factor);
  if (auto mode = entries.take("notch.depth_mode")) {
    const std::string m = unquote(*mode);
    if (m == "finite_half_gap") config.notch.depth_mode = DepthMode::kFiniteHalfGap;
    else if (m == "infinite") config.notch.depth_mode = DepthMode::kInfinite;
    else Entries::bad("notch.depth_mode", *mode);
  }

  auto& m = config.margins;
  entries.number("margins.amplitude_margin_db", m.amplitude_margin_db);
  m.phase_margin_deg.reset();
  if (auto v = entries.take("margins.phase_margin_deg")) {
    m.phase_margin_deg = Entries::parse_number("margins.phase_margin_deg", *v);
  }
  if (auto v = entries.take("margins.damping_ratio")) {
    m.damping_ratio = Entries::parse_number("margins.damping_ratio", *v);
  }
  if (!m.phase_margin_deg && !m.damping_ratio) m.phase_margin_deg = 65.0;
  entries.number("margins.phase_offset_deg", m.phase_offset_deg);
  entries.number("margins.offset_step_deg", m.offset_step_deg);
  entries.integer("margins.max_iterations", m.max_iterations);
  entries.number("margins.pm_tolerance_deg", m.pm_tolerance_deg);
  entries.number("margins.am_tolerance_db", m.am_tolerance_db);

  entries.boolean("relay.enabled", config.relay.enabled);
  entries.number("relay.amplitude", config.relay.amplitude);
  entries.number("relay.hysteresis", config.relay.hysteresis);
  entries.number("relay.duration", config.relay.duration);

  entries.number("step.reference", config.step.reference);
  entries.number("step.duration", config.step.duration);
  entries.number("step.torque_limit", config.step.torque_limit);

  std::vector<std::string> names;
  for (const auto& key : entries.keys_with_prefix("baselines.")) {
    const auto rest = key.substr(std::string("baselines.").size());
    const auto dot = rest.find('.');
    if (dot == std::string::npos) continue;
    const std::string name = rest.substr(0, dot);
    if (names.empty() || names.back() != name) names.push_back(name);
  }
  for (const auto& name : names) {
    const std::string prefix = "baselines." + name + ".";
    BaselineController b;
    entries.number(prefix + "kp", b.gains.kp);
    entries.number(prefix + "ti", b.gains.ti);
    NotchParams n;
    const bool has_notch = entries.keys_with_prefix(prefix + "notch_").size() > 0;
    entries.number(prefix + "notch_center_hz", n.center_hz);
    entries.number(prefix + "notch_bandwidth_hz", n.bandwidth_hz);
    entries.number(prefix + "notch_depth_db", n.depth_db);
    if (has_notch) b.notch = n;
    config.baselines[name] = b;
  }

  entries.require_consumed();
  config.margins.coherence_threshold = config.welch.coherence_threshold;
  config.validate();
  return config;
}

ProjectConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidConfig, "cannot read config " + path.string());
  return parse_config(in);
}

std::string dump_config(const ProjectConfig& config) {
  std::ostringstream out;
  auto num = [](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    char buffer[32];
    const auto result = std::to_chars(buffer, buffer + sizeof buffer, v);
    return std::string(buffer, result.ptr);
  };
  out << "# servotune project configuration\n"
      << "sample_period = " << num(config.sample_period) << "\n"
      << "output_dir = \"" << config.output_dir << "\"\n\n";

  const auto& p = config.plant;
  out << "[plant]\n"
      << "# resonance " << format_number(p.resonance_hz()) << " Hz, antiresonance "
      << format_number(p.antiresonance_hz()) << " Hz\n"
      << "motor_inertia = " << num(p.motor_inertia) << "\n"
      << "load_inertia = " << num(p.load_inertia) << "\n"
      << "stiffness = " << num(p.stiffness) << "\n"
      << "coupling_damping = " << num(p.coupling_damping) << "\n"
      << "motor_viscous_friction = " << num(p.motor_viscous_friction) << "\n"
      << "load_viscous_friction = " << num(p.load_viscous_friction) << "\n"
      << "torque_lag_time_constant = " << num(p.torque_lag_time_constant) << "\n"
      << "torque_delay = " << num(p.torque_delay) << "\n\n";

  const auto& x = config.excitation;
  const char* kind = x.kind == ExcitationKind::kWhiteNoise ? "white_noise"
                     : x.kind == ExcitationKind::kStep     ? "step"
                                                           : "relay";
  out << "[excitation]\n"
      << "kind = " << kind << "\n"
      << "amplitude = " << num(x.amplitude) << "\n"
      << "duration = " << num(x.duration) << "\n"
      << "seed = " << x.seed << "\n"
      << "relay_hysteresis = " << num(x.relay_hysteresis) << "\n\n";

  out << "[welch]\n"
      << "segment_length = " << config.welch.segment_length << "\n"
      << "overlap_fraction = " << num(config.welch.overlap_fraction) << "\n"
      << "coherence_threshold = " << num(config.welch.coherence_threshold) << "\n\n";

  out << "[notch]\n"
      << "bandwidth_factor = " << num(config.notch.bandwidth_factor) << "\n"
      << "depth_mode = "
      << (config.notch.depth_mode == DepthMode::kInfinite ? "infinite" : "finite_half_gap")
      << "\n\n";

  const auto& m = config.margins;
  out << "[margins]\n"
      << "amplitude_margin_db = " << num(m.amplitude_margin_db) << "\n";
  if (m.phase_margin_deg) out << "phase_margin_deg = " << num(*m.phase_margin_deg) << "\n";
  if (m.damping_ratio) out << "damping_ratio = " << num(*m.damping_ratio) << "\n";
  out << "phase_offset_deg = " << num(m.phase_offset_deg) << "\n"
      << "offset_step_deg = " << num(m.offset_step_deg) << "\n"
      << "max_iterations = " << m.max_iterations << "\n"
      << "pm_tolerance_deg = " << num(m.pm_tolerance_deg) << "\n"
      << "am_tolerance_db = " << num(m.am_tolerance_db) << "\n\n";

  out << "[relay]\n"
      << "enabled = " << (config.relay.enabled ? "true" : "false") << "\n"
      << "amplitude = " << num(config.relay.amplitude) << "\n"
      << "hysteresis = " << num(config.relay.hysteresis) << "\n"
      << "duration = " << num(config.relay.duration) << "\n\n";

  out << "[step]\n"
      << "reference = " << num(config.step.reference) << "\n"
      << "duration = " << num(config.step.duration) << "\n"
      << "torque_limit = " << num(config.step.torque_limit) << "\n";

  for (const auto& [name, b] : config.baselines) {
    out << "\n[baselines." << name << "]\n"
        << "kp = " << num(b.gains.kp) << "\n"
        << "ti = " << num(b.gains.ti) << "\n";
    if (b.notch) {
      out << "notch_center_hz = " << num(b.notch->center_hz) << "\n"
          << "notch_bandwidth_hz = " << num(b.notch->bandwidth_hz) << "\n"
          << "notch_depth_db = " << num(b.notch->depth_db) << "\n";
    }
  }
  return out.str();
}

}  // namespace servotune
