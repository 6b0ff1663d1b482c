#pragma once

// Experiment configuration: one JSON document with sections radio, pam,
// train, task, mc plus run-level keys. Every key is optional; missing keys
// take the defaults below, unknown keys are rejected with a JSON pointer to
// the offending field. See README.md for the grammar.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "umwfl/channel.hpp"
#include "umwfl/fl.hpp"
#include "umwfl/pam.hpp"

namespace umwfl {

struct MonteCarloConfig {
  std::size_t draws = 100000;
};

struct ExperimentConfig {
  RadioConfig radio = RadioConfig::defaults();
  PamConfig pam;
  LocalTrainConfig train;
  TaskSpec task;
  MonteCarloConfig mc;
  int rounds = 15;
  std::size_t replays = 1;
  std::vector<std::uint64_t> seeds{0};
  std::vector<LinkMode> modes{LinkMode::Pam, LinkMode::Baseline};
  std::string out = "out";
  unsigned threads = 1;

  void validate() const;
  ExperimentConfigView view() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);

/// Reads and validates a config file. Throws ConfigError (path "" for I/O
/// and syntax problems).
ExperimentConfig parse_config(const std::string& path);

/// "pam", "baseline" or "both".
std::vector<LinkMode> parse_modes(const std::string& s);
std::string modes_to_string(const std::vector<LinkMode>& modes);

}  // namespace umwfl
