#pragma once

#include <stdexcept>
#include <string>

namespace umwfl {

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical precondition failed (singular system, zero denominator,
/// ill-conditioned capacitance, ...).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, double estimate = 0.0)
      : std::runtime_error(what), estimate_(estimate) {}

  /// Condition estimate or offending magnitude, when one applies.
  double estimate() const noexcept { return estimate_; }

 private:
  double estimate_;
};

/// Invalid user-supplied configuration. `path` locates the offending field
/// as a JSON pointer (e.g. "/radio/noise_power_server_w").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace umwfl
