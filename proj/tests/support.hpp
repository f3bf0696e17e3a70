#pragma once

#include <functional>
#include <string>

#include "doctest.h"
#include "servotune/error.hpp"

// Runs `body` and reports which servotune error (if any) escaped.
inline std::string error_of(const std::function<void()>& body) {
  try {
    body();
  } catch (const servotune::Error& e) {
    return std::string(servotune::error_name(e.code()));
  }
  return "none";
}
