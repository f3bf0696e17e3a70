#include "servotune/io.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <vector>

#include "servotune/error.hpp"

namespace servotune {
namespace {

std::vector<std::vector<double>> read_rows(std::istream& in, std::string_view expected_header,
                                           std::size_t columns) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kIo, "empty CSV input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header) {
    throw Error(ErrorCode::kIo, "unexpected CSV header '" + line + "', expected '" +
                                    std::string(expected_header) + "'");
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kIo, "malformed CSV cell '" + cell + "'");
      }
    }
    if (row.size() != columns) {
      throw Error(ErrorCode::kIo, "CSV row has " + std::to_string(row.size()) + " cells, expected " +
                                      std::to_string(columns));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string format_number(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.10g", value);
  return buffer;
}

void write_trace_csv(std::ostream& out, const SimTrace& trace) {
  trace.validate();
  out << "t,torque,ref,w_motor,w_load,twist\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double ref = trace.reference.empty() ? 0.0 : trace.reference[i];
    out << format_number(trace.time(i)) << ',' << format_number(trace.torque_command[i]) << ','
        << format_number(ref) << ',' << format_number(trace.motor_velocity[i]) << ','
        << format_number(trace.load_velocity[i]) << ',' << format_number(trace.twist_angle[i])
        << '\n';
  }
}

void write_frf_csv(std::ostream& out, const FrequencyResponse& frf) {
  const auto magnitude = frf.magnitude_db();
  const auto phase = frf.phase_deg();
  out << "f_hz,mag_db,phase_deg,coherence\n";
  for (std::size_t i = 0; i < frf.size(); ++i) {
    out << format_number(frf.frequencies[i]) << ',' << format_number(magnitude[i]) << ','
        << format_number(phase[i]) << ',' << format_number(frf.coherence[i]) << '\n';
  }
}

void write_intervals_csv(std::ostream& out, std::span<const FrequencyInterval> intervals) {
  out << "low_hz,high_hz\n";
  for (const auto& interval : intervals) {
    out << format_number(interval.low_hz) << ',' << format_number(interval.high_hz) << '\n';
  }
}

void write_biquad_csv(std::ostream& out, const NotchBiquad& biquad) {
  out << "b0,b1,b2,a1,a2\n";
  char buffer[160];
  std::snprintf(buffer, sizeof buffer, "%.17g,%.17g,%.17g,%.17g,%.17g\n", biquad.numerator[0],
                biquad.numerator[1], biquad.numerator[2], biquad.denominator[1],
                biquad.denominator[2]);
  out << buffer;
}

SimTrace read_trace_csv(std::istream& in) {
  const auto rows = read_rows(in, "t,torque,ref,w_motor,w_load,twist", 6);
  if (rows.size() < 2) throw Error(ErrorCode::kIo, "trace CSV needs at least two rows");
  SimTrace trace;
  trace.sample_period = rows[1][0] - rows[0][0];
  bool has_reference = false;
  for (const auto& row : rows) {
    trace.torque_command.push_back(row[1]);
    trace.reference.push_back(row[2]);
    trace.motor_velocity.push_back(row[3]);
    trace.load_velocity.push_back(row[4]);
    trace.twist_angle.push_back(row[5]);
    has_reference = has_reference || row[2] != 0.0;
  }
  if (!has_reference) trace.reference.clear();
  trace.validate();
  return trace;
}

FrequencyResponse read_frf_csv(std::istream& in) {
  const auto rows = read_rows(in, "f_hz,mag_db,phase_deg,coherence", 4);
  FrequencyResponse frf;
  for (const auto& row : rows) {
    frf.frequencies.push_back(row[0]);
    frf.response.push_back(
        std::polar(std::pow(10.0, row[1] / 20.0), row[2] * std::numbers::pi / 180.0));
    frf.coherence.push_back(row[3]);
  }
  frf.validate();
  return frf;
}

}  // namespace servotune
