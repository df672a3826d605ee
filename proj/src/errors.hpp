#pragma once

#include <stdexcept>
#include <string>

namespace cn {

// Invalid parameters / configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

// Runtime failures: shape mismatches, training divergence, I/O (exit code 3).
struct RuntimeError : std::runtime_error {
  explicit RuntimeError(const std::string& m) : std::runtime_error(m) {}
};

// A verification check failed (exit code 4).
struct CheckError : std::runtime_error {
  explicit CheckError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace cn
