#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "servotune/frequency_response.hpp"
#include "servotune/notch.hpp"
#include "servotune/plant.hpp"
#include "servotune/sysid.hpp"

namespace servotune {

// CSV layouts:
//   trace        t,torque,ref,w_motor,w_load,twist
//   response     f_hz,mag_db,phase_deg,coherence
//   intervals    low_hz,high_hz
//   biquad       b0,b1,b2,a1,a2

void write_trace_csv(std::ostream& out, const SimTrace& trace);
void write_frf_csv(std::ostream& out, const FrequencyResponse& frf);
void write_intervals_csv(std::ostream& out, std::span<const FrequencyInterval> intervals);
void write_biquad_csv(std::ostream& out, const NotchBiquad& biquad);

SimTrace read_trace_csv(std::istream& in);
FrequencyResponse read_frf_csv(std::istream& in);

/// Opens `path` for writing and hands the stream to `writer`.
template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer);

std::string format_number(double value);

}  // namespace servotune

#include <fstream>

#include "servotune/error.hpp"

namespace servotune {

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  writer(out);
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace servotune
