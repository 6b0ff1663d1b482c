#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "umwfl/cli.hpp"
#include "umwfl/config.hpp"
#include "umwfl/errors.hpp"

using namespace umwfl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("umwfl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "umwfl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string config_error_path(const std::string& text) {
  try {
    config_from_json(json::parse(text));
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<none>";
}

const char* kSmall = R"({
  "radio": {"antennas": 2, "users": 2},
  "pam": {"outer_iters": 3, "inner_iters": 10},
  "task": {"dim": 4, "samples_per_user": 20},
  "rounds": 3,
  "replays": 4,
  "mc": {"draws": 2000}
})";

}  // namespace

TEST_SUITE("config") {

TEST_CASE("empty config gives the paper defaults") {
  const ExperimentConfig c = config_from_json(json::object());
  CHECK(c.radio.antennas == 8);
  CHECK(c.radio.users == 3);
  CHECK(c.rounds == 15);
  CHECK(c.radio.power_budget == doctest::Approx(1.0));
  CHECK(c.radio.power_scaling == 1.0);
  CHECK(c.radio.pathloss_db == std::vector<double>{-40, -40, -40});
  CHECK(c.radio.noise_power_server == doctest::Approx(1e-11));
  CHECK(c.modes.size() == 2);
}

TEST_CASE("schema errors name the field") {
  CHECK(config_error_path(R"({"radio": {"noise_power_server_w": -1}})") == "/radio/noise_power_server_w");
  CHECK(config_error_path(R"({"radio": {"noise_power_user_w": [1e-9, -1, 1e-9]}})") == "/radio/noise_power_user_w/1");
  CHECK(config_error_path(R"({"radio": {"antenas": 4}})") == "/radio/antenas");
  CHECK(config_error_path(R"({"bogus": 1})") == "/bogus");
  CHECK(config_error_path(R"({"rounds": "many"})") == "/rounds");
  CHECK(config_error_path(R"({"rounds": 0})") == "/rounds");
  CHECK(config_error_path(R"({"pam": {"rho": -2}})") == "/pam/rho");
  CHECK(config_error_path(R"({"pam": {"init": "identity"}})") == "/pam/init");
  CHECK(config_error_path(R"({"radio": {"pathloss_db": [1, 2]}})") == "/radio/pathloss_db");
  CHECK(config_error_path(R"({"seeds": [1, -2]})") == "/seeds/1");
  CHECK(config_error_path(R"({"mode": "neither"})") == "/mode");
}

TEST_CASE("serialize after parse is a fixed point") {
  const json input = json::parse(R"({"radio": {"users": 2, "pathloss_db": -30, "noise_power_user_w": [1e-10, 2e-10]},
                                     "pam": {"rho": 2.5, "split_update": "per_user", "eq17_literal": true},
                                     "train": {"step_size": 0.1}, "seeds": [3, 1], "mode": "pam"})");
  const json once = config_to_json(config_from_json(input));
  const json twice = config_to_json(config_from_json(once));
  CHECK(once == twice);
  CHECK(once["radio"]["pathloss_db"] == json::array({-30.0, -30.0}));
  CHECK(once["pam"]["split_update"] == "per_user");
  CHECK(once["train"]["step_size"] == 0.1);
}

TEST_CASE("config files: missing, malformed and empty") {
  const fs::path dir = scratch_dir("config_files");
  CHECK_THROWS_AS(parse_config((dir / "absent.json").string()), ConfigError);
  write(dir / "broken.json", "{ not json");
  CHECK_THROWS_AS(parse_config((dir / "broken.json").string()), ConfigError);
  write(dir / "empty.json", "");
  CHECK(parse_config((dir / "empty.json").string()).rounds == 15);
}

}

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  const fs::path dir = scratch_dir("exit_codes");
  write(dir / "bad.json", R"({"radio": {"noise_power_server_w": -1}})");
  const Run bad = cli({"simulate", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()});
  CHECK(bad.code == kExitConfig);
  CHECK(bad.err.find("/radio/noise_power_server_w") != std::string::npos);
  CHECK(cli({"simulate", "--mode", "sideways"}).code == kExitConfig);
  CHECK(cli({}).code == kExitConfig);

  write(dir / "zero.json", R"({"radio": {"antennas": 1, "users": 1, "noise_power_server_w": 0, "noise_power_user_w": 0}})");
  write(dir / "dead_channel.json", R"({"uplink": [[[1, 0]]], "downlink": [[[0, 0]]]})");
  const Run numeric = cli({"optimize", "--config", (dir / "zero.json").string(), "--channel",
                           (dir / "dead_channel.json").string(), "--out", (dir / "o").string()});
  CHECK(numeric.code == kExitNumeric);
  CHECK(numeric.err.find("design") != std::string::npos);
}

TEST_CASE("simulate is byte-identical across runs and thread counts") {
  const fs::path dir = scratch_dir("simulate_repeat");
  write(dir / "c.json", kSmall);
  const std::string cfg = (dir / "c.json").string();
  REQUIRE(cli({"simulate", "--config", cfg, "--mode", "both", "--seed", "7", "--out", (dir / "a").string()}).code == 0);
  REQUIRE(cli({"simulate", "--config", cfg, "--mode", "both", "--seed", "7", "--out", (dir / "b").string(),
               "--threads", "4"})
              .code == 0);
  for (const char* name : {"simulate_seed7.csv", "simulate_summary.json"})
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));

  const std::string csv = slurp(dir / "a" / "simulate_seed7.csv");
  CHECK(csv.find('\r') == std::string::npos);
  CHECK(csv.find("# seed: 7\n") != std::string::npos);
  CHECK(csv.find("\nround,mode,loss,loss_gap,max_mse,bound\n") != std::string::npos);
  const auto config_line = csv.find("# config: ");
  REQUIRE(config_line != std::string::npos);
  const json embedded = json::parse(csv.substr(config_line + 10, csv.find('\n', config_line) - config_line - 10));
  CHECK(embedded["seeds"] == json::array({7}));
  CHECK(config_from_json(embedded).rounds == 3);
}

TEST_CASE("mse-check writes the z-score table") {
  const fs::path dir = scratch_dir("mse_check");
  write(dir / "c.json", kSmall);
  const Run r = cli({"mse-check", "--config", (dir / "c.json").string(), "--seed", "2", "--out", dir.string()});
  CHECK(r.code == 0);
  const std::string csv = slurp(dir / "mse_check_seed2.csv");
  CHECK(csv.find("\nmode,user,analytic,mc_mean,mc_se,z_score\n") != std::string::npos);
}

TEST_CASE("optimize writes the solution") {
  const fs::path dir = scratch_dir("optimize");
  write(dir / "c.json", kSmall);
  const Run r = cli({"optimize", "--config", (dir / "c.json").string(), "--mode", "pam", "--out", dir.string()});
  CHECK(r.code == 0);
  const json j = json::parse(slurp(dir / "optimize_seed0.json"));
  CHECK(j["modes"]["pam"]["phase_shifts"].size() == 2);
  CHECK(j["modes"]["pam"]["objective_trajectory"].size() == 4);
  CHECK_FALSE(j["modes"].contains("baseline"));
}

TEST_CASE("validate passes on the default config") {
  const fs::path dir = scratch_dir("validate");
  const Run r = cli({"validate", "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

}
