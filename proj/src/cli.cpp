#include "umwfl/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "umwfl/config.hpp"
#include "umwfl/errors.hpp"
#include "umwfl/validation.hpp"

namespace umwfl {

using nlohmann::json;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string out;
  std::optional<unsigned> threads;
  std::string channel_path;
};

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig c = o.config_path.empty() ? config_from_json(json::object())
                                             : parse_config(o.config_path);
  if (o.seed) c.seeds = {*o.seed};
  if (!o.mode.empty()) c.modes = parse_modes(o.mode);
  if (!o.out.empty()) c.out = o.out;
  if (o.threads) c.threads = *o.threads;
  c.validate();
  std::sort(c.seeds.begin(), c.seeds.end());
  c.seeds.erase(std::unique(c.seeds.begin(), c.seeds.end()), c.seeds.end());
  return c;
}

// Config as embedded in outputs: the single seed the file was produced
// with, and without the output directory and thread count, which do not
// affect results.
json embedded_config(const ExperimentConfig& c, std::uint64_t seed) {
  json j = config_to_json(c);
  j["seeds"] = json::array({seed});
  j.erase("out");
  j.erase("threads");
  return j;
}

std::string csv_preamble(const char* command, const ExperimentConfig& c, std::uint64_t seed) {
  return std::string("# umwfl ") + command + "\n# seed: " + std::to_string(seed) +
         "\n# config: " + embedded_config(c, seed).dump() + "\n";
}

std::filesystem::path write_file(const ExperimentConfig& c, const std::string& name,
                                 const std::string& body) {
  std::filesystem::create_directories(c.out);
  const auto path = std::filesystem::path(c.out) / name;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << body;
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
  return path;
}

json complex_json(cd z) { return json::array({z.real(), z.imag()}); }

json matrix_json(const MatrixXcd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_json(m(r, c)));
    rows.push_back(row);
  }
  return rows;
}

std::vector<VectorXcd> read_vectors(const json& j, const std::string& path, int users,
                                    int antennas) {
  if (!j.is_array() || static_cast<int>(j.size()) != users)
    throw ConfigError(path, "expected " + std::to_string(users) + " vectors");
  std::vector<VectorXcd> out;
  for (int k = 0; k < users; ++k) {
    const json& v = j[k];
    const std::string at = path + "/" + std::to_string(k);
    if (!v.is_array() || static_cast<int>(v.size()) != antennas)
      throw ConfigError(at, "expected " + std::to_string(antennas) + " entries");
    VectorXcd x(antennas);
    for (int n = 0; n < antennas; ++n) {
      const json& e = v[n];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        throw ConfigError(at + "/" + std::to_string(n), "expected [re, im]");
      x(n) = cd(e[0].get<double>(), e[1].get<double>());
    }
    out.push_back(std::move(x));
  }
  return out;
}

// {"uplink": [[[re, im], ...], ...], "downlink": ...}, one vector per user.
ChannelRealization read_channel(const std::string& path, const RadioConfig& radio) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open channel file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("", "'" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("/", "channel file must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "uplink" && it.key() != "downlink")
      throw ConfigError("/" + it.key(), "unknown key");
  if (!j.contains("uplink") || !j.contains("downlink"))
    throw ConfigError("/", "channel file needs uplink and downlink");
  ChannelRealization chan;
  chan.uplink = read_vectors(j["uplink"], "/uplink", radio.users, radio.antennas);
  chan.downlink = read_vectors(j["downlink"], "/downlink", radio.users, radio.antennas);
  return chan;
}

std::vector<std::size_t> dataset_sizes(const ExperimentConfig& c) {
  return c.task.samples_per_user.empty() ? std::vector<std::size_t>(c.radio.users, 100)
                                         : c.task.samples_per_user;
}

int cmd_optimize(const ExperimentConfig& c, const Options& o, std::string& stage,
                 std::ostream& out) {
  const auto w = AggregationWeights::from_sizes(dataset_sizes(c));
  for (std::uint64_t seed : c.seeds) {
    stage = "channel";
    const ChannelRealization chan =
        o.channel_path.empty() ? sample_channels(c.radio, seed) : read_channel(o.channel_path, c.radio);
    PamConfig pam = c.pam;
    pam.seed = seed;
    json summary = {{"seed", seed}, {"config", embedded_config(c, seed)}};
    std::string csv = csv_preamble("optimize", c, seed) + "iteration,mode,objective\n";
    for (LinkMode mode : c.modes) {
      stage = std::string(to_string(mode)) + " design";
      const Solution sol = mode == LinkMode::Pam ? run_pam(chan, w, c.radio, pam)
                                                 : run_baseline(chan, w, c.radio, pam);
      json blocks = json::array();
      for (const auto& b : sol.blocks)
        blocks.push_back({{"r_before", b.r_before}, {"r_after", b.r_after},
                          {"t_before", b.t_before}, {"t_after", b.t_after}});
      json transmit = json::array(), receive = json::array();
      for (cd t : sol.links.transmit) transmit.push_back(complex_json(t));
      for (cd r : sol.links.receive) receive.push_back(complex_json(r));
      summary["modes"][to_string(mode)] = {
          {"objective", sol.objective_trajectory.back()},
          {"objective_trajectory", sol.objective_trajectory},
          {"inner_trajectories", sol.inner_trajectories},
          {"blocks", blocks},
          {"phase_shifts", matrix_json(sol.phase_shifts)},
          {"transmit", transmit},
          {"receive", receive},
      };
      for (std::size_t i = 0; i < sol.objective_trajectory.size(); ++i)
        csv += std::to_string(i) + "," + to_string(mode) + "," + num(sol.objective_trajectory[i]) + "\n";
      out << "seed " << seed << " " << to_string(mode) << ": objective "
          << num(sol.objective_trajectory.front()) << " -> " << num(sol.objective_trajectory.back())
          << "\n";
    }
    stage = "output";
    const std::string stem = "optimize_seed" + std::to_string(seed);
    write_file(c, stem + ".csv", csv);
    write_file(c, stem + ".json", summary.dump(2) + "\n");
  }
  return kExitOk;
}

json record_json(const RoundRecord& r) {
  return {{"round", r.round},         {"loss", r.loss},     {"loss_gap", r.loss_gap},
          {"worst_gap", r.worst_gap}, {"max_mse", r.max_mse}, {"bound", r.bound},
          {"objective", r.objective}, {"eta", r.eta},       {"target_loss", r.target_loss},
          {"user_gap", r.user_gap}};
}

int cmd_simulate(const ExperimentConfig& c, std::string& stage, std::ostream& out) {
  json all = json::array();
  for (std::uint64_t seed : c.seeds) {
    stage = "task";
    const SyntheticTask task = SyntheticTask::generate(c.task, c.radio.users, seed);
    stage = "experiment";
    const ExperimentReport rep = run_experiment(task, c.radio, c.train, c.pam, {seed}, c.view());
    stage = "output";
    std::string csv = csv_preamble("simulate", c, seed) + "round,mode,loss,loss_gap,max_mse,bound\n";
    json summary = {{"seed", seed},
                    {"config", embedded_config(c, seed)},
                    {"optimal_loss", rep.optimal_loss},
                    {"mu", rep.curvature.mu},
                    {"L", rep.curvature.L},
                    {"step_size", rep.step_size}};
    for (std::size_t t = 0; t < rep.trajectories.size(); ++t) {
      const Trajectory& tr = rep.trajectories[t];
      json rounds = json::array();
      for (const auto& r : tr.rounds) {
        csv += std::to_string(r.round) + "," + to_string(tr.mode) + "," + num(r.loss) + "," +
               num(r.loss_gap) + "," + num(r.max_mse) + "," + num(r.bound) + "\n";
        rounds.push_back(record_json(r));
      }
      summary["modes"][to_string(tr.mode)] = {
          {"final_loss", tr.rounds.back().loss},
          {"final_objective", tr.rounds.back().objective},
          {"early_bound_violations", rep.early_bound_violations[t]},
          {"rounds", rounds}};
      out << "seed " << seed << " " << to_string(tr.mode) << ": final loss "
          << num(tr.rounds.back().loss) << ", gap " << num(tr.rounds.back().loss_gap) << "\n";
    }
    const std::string stem = "simulate_seed" + std::to_string(seed);
    write_file(c, stem + ".csv", csv);
    all.push_back(summary);
  }
  write_file(c, "simulate_summary.json", all.dump(2) + "\n");
  return kExitOk;
}

int cmd_mse_check(const ExperimentConfig& c, std::string& stage, std::ostream& out) {
  const auto w = AggregationWeights::from_sizes(dataset_sizes(c));
  const int symbols = (c.task.dim + c.task.dim % 2) / 2;
  const double eta = 1.0;
  double worst = 0.0;
  for (std::uint64_t seed : c.seeds) {
    stage = "channel";
    const auto chan = sample_channels(c.radio, seed);
    PamConfig pam = c.pam;
    pam.seed = seed;
    std::string csv = csv_preamble("mse-check", c, seed) +
                      "mode,user,analytic,mc_mean,mc_se,z_score\n";
    for (LinkMode mode : c.modes) {
      stage = std::string(to_string(mode)) + " design";
      const LinkPlan plan = plan_links(chan, w, c.radio, pam, mode);
      stage = "monte carlo";
      const auto analytic = analytic_mse(plan.phase_shifts, plan.links, chan, w, c.radio, eta, symbols);
      const auto mc = monte_carlo_mse(plan.phase_shifts, plan.links, chan, w, c.radio, eta, symbols,
                                      c.mc.draws, seed, c.threads);
      for (int k = 0; k < c.radio.users; ++k) {
        const double z = mc[k].std_error > 0 ? (mc[k].mean - analytic[k]) / mc[k].std_error
                                             : (mc[k].mean == analytic[k] ? 0.0 : HUGE_VAL);
        worst = std::max(worst, std::abs(z));
        csv += std::string(to_string(mode)) + "," + std::to_string(k) + "," + num(analytic[k]) + "," +
               num(mc[k].mean) + "," + num(mc[k].std_error) + "," + num(z) + "\n";
      }
    }
    stage = "output";
    write_file(c, "mse_check_seed" + std::to_string(seed) + ".csv", csv);
  }
  out << "max |z| = " << num(worst) << "\n";
  return worst <= 3.0 ? kExitOk : kExitValidation;
}

int cmd_validate(const ExperimentConfig& c, std::string& stage, std::ostream& out) {
  bool ok = true;
  for (std::uint64_t seed : c.seeds) {
    stage = "oracle suite";
    const ValidationReport rep = run_validation(c, seed);
    std::string csv = csv_preamble("validate", c, seed) + "check,passed,instances,worst,limit\n";
    for (const auto& ch : rep.checks) {
      csv += ch.name + "," + (ch.passed ? "1" : "0") + "," + std::to_string(ch.instances) + "," +
             num(ch.worst) + "," + num(ch.limit) + "\n";
      out << (ch.passed ? "PASS " : "FAIL ") << ch.name << " (" << ch.instances
          << " instances, worst " << num(ch.worst) << ", limit " << num(ch.limit) << ")\n";
    }
    ok = ok && rep.passed();
    stage = "output";
    write_file(c, "validate_seed" + std::to_string(seed) + ".csv", csv);
  }
  return ok ? kExitOk : kExitValidation;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Over-the-air federated learning with unit-modulus phase-shift design"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file (defaults when omitted)");
    sub->add_option("--seed", o.seed, "Run only this seed");
    sub->add_option("--mode", o.mode, "Link design to run")
        ->check(CLI::IsMember({"pam", "baseline", "both"}));
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--threads", o.threads, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
  };
  auto* optimize = app.add_subcommand("optimize", "Design F, r, t for one channel");
  add_common(optimize);
  optimize->add_option("--channel", o.channel_path, "Channel JSON instead of a sampled one");
  auto* simulate = app.add_subcommand("simulate", "Run the federated training experiment");
  add_common(simulate);
  auto* mse = app.add_subcommand("mse-check", "Analytic vs. Monte Carlo MSE table");
  add_common(mse);
  auto* validate = app.add_subcommand("validate", "Run the oracle suite");
  add_common(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
  }

  std::string stage = "config";
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const ExperimentConfig c = resolve(o);
    if (command == "optimize") return cmd_optimize(c, o, stage, out);
    if (command == "simulate") return cmd_simulate(c, stage, out);
    if (command == "mse-check") return cmd_mse_check(c, stage, out);
    return cmd_validate(c, stage, out);
  } catch (const ConfigError& e) {
    err << command << ": " << stage << ": config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << command << ": " << stage << ": numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << command << ": " << stage << ": " << e.what() << "\n";
    return kExitOther;
  }
}

}  // namespace umwfl
