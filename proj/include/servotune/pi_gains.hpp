#pragma once

namespace servotune {

/// Speed PI controller in ideal form, C(s) = kp (ti s + 1) / (ti s).
struct PiGains {
  double kp = 0.0;  ///< N·m·s/rad
  double ti = 0.0;  ///< s

  void validate() const;
};

}  // namespace servotune
