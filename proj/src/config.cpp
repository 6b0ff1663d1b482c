#include "umwfl/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

#include "umwfl/errors.hpp"

namespace umwfl {

using nlohmann::json;

namespace {

// Typed access to one JSON object that rejects keys it was not told about.
class Section {
 public:
  Section(const json& j, std::string path, std::initializer_list<const char*> keys)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) throw ConfigError(at(it.key()), "unknown key");
    }
  }

  std::string at(const std::string& key) const { return path_ + "/" + key; }
  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const char* key) const { return j_.at(key); }

  void number(const char* key, double& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
  }

  template <typename Int>
  void integer(const char* key, Int& out) const {
    if (!has(key)) return;
    out = integer_value<Int>(j_.at(key), at(key));
  }

  void boolean(const char* key, bool& out) const {
    if (!has(key)) return;
    if (!j_.at(key).is_boolean()) throw ConfigError(at(key), "expected true or false");
    out = j_.at(key).get<bool>();
  }

  void string(const char* key, std::string& out) const {
    if (!has(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(at(key), "expected a string");
    out = j_.at(key).get<std::string>();
  }

  // Scalar (broadcast to `count` entries) or array of `count` numbers.
  void per_user(const char* key, std::vector<double>& out, std::size_t count) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (v.is_number()) {
      out.assign(count, v.get<double>());
      return;
    }
    if (!v.is_array()) throw ConfigError(at(key), "expected a number or an array");
    if (v.size() != count)
      throw ConfigError(at(key), "expected " + std::to_string(count) + " entries");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        throw ConfigError(at(key) + "/" + std::to_string(i), "expected a number");
      out.push_back(v[i].get<double>());
    }
  }

  template <typename Int>
  static Int integer_value(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) {
      const auto x = v.get<std::uint64_t>();
      if (x > static_cast<std::uint64_t>(std::numeric_limits<Int>::max()))
        throw ConfigError(path, "out of range");
      return static_cast<Int>(x);
    }
    if (v.is_number_integer()) {
      const auto x = v.get<std::int64_t>();
      if constexpr (std::is_unsigned_v<Int>) {
        if (x < 0) throw ConfigError(path, "must be non-negative");
      } else if (x < std::numeric_limits<Int>::min() || x > std::numeric_limits<Int>::max()) {
        throw ConfigError(path, "out of range");
      }
      return static_cast<Int>(x);
    }
    throw ConfigError(path, "expected an integer");
  }

 private:
  const json& j_;
  std::string path_;
};

InitStrategy parse_init(const std::string& s, const std::string& path) {
  if (s == "random_phase") return InitStrategy::RandomPhase;
  if (s == "all_ones") return InitStrategy::AllOnes;
  throw ConfigError(path, "expected \"random_phase\" or \"all_ones\"");
}

SplitUpdate parse_split(const std::string& s, const std::string& path) {
  if (s == "coupled") return SplitUpdate::Coupled;
  if (s == "per_user") return SplitUpdate::PerUser;
  throw ConfigError(path, "expected \"coupled\" or \"per_user\"");
}

TaskKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "quadratic") return TaskKind::Quadratic;
  if (s == "logistic") return TaskKind::Logistic;
  throw ConfigError(path, "expected \"quadratic\" or \"logistic\"");
}

RadioConfig read_radio(const json& j) {
  Section s(j, "/radio",
            {"antennas", "users", "pathloss_db", "downlink_pathloss_db", "noise_power_server_w",
             "noise_power_user_w", "power_budget_w", "power_scaling"});
  int antennas = 8, users = 3;
  s.integer("antennas", antennas);
  s.integer("users", users);
  if (users < 1) throw ConfigError("/radio/users", "must be >= 1");
  RadioConfig r = RadioConfig::defaults(antennas, users);
  const auto k = static_cast<std::size_t>(users);
  s.per_user("pathloss_db", r.pathloss_db, k);
  s.per_user("downlink_pathloss_db", r.downlink_pathloss_db, k);
  s.number("noise_power_server_w", r.noise_power_server);
  s.per_user("noise_power_user_w", r.noise_power_user, k);
  s.number("power_budget_w", r.power_budget);
  s.number("power_scaling", r.power_scaling);
  return r;
}

PamConfig read_pam(const json& j) {
  Section s(j, "/pam",
            {"rho", "outer_iters", "inner_iters", "t_solver_iters", "t_solver_tol", "init",
             "rho_growth", "eq17_literal", "split_update"});
  PamConfig p;
  s.number("rho", p.rho);
  s.integer("outer_iters", p.outer_iters);
  s.integer("inner_iters", p.inner_iters);
  s.integer("t_solver_iters", p.t_solver_iters);
  s.number("t_solver_tol", p.t_solver_tol);
  std::string text;
  s.string("init", text);
  if (!text.empty()) p.init = parse_init(text, "/pam/init");
  s.number("rho_growth", p.rho_growth);
  s.boolean("eq17_literal", p.eq17_literal);
  text.clear();
  s.string("split_update", text);
  if (!text.empty()) p.split_update = parse_split(text, "/pam/split_update");
  return p;
}

LocalTrainConfig read_train(const json& j) {
  Section s(j, "/train", {"step_size", "local_steps"});
  LocalTrainConfig t;
  if (s.has("step_size")) {
    double step = 0;
    s.number("step_size", step);
    t.step_size = step;
  }
  s.integer("local_steps", t.local_steps);
  return t;
}

TaskSpec read_task(const json& j, int users) {
  Section s(j, "/task",
            {"kind", "dim", "samples_per_user", "rows_per_sample", "ridge", "label_noise",
             "heterogeneity"});
  TaskSpec t;
  std::string kind;
  s.string("kind", kind);
  if (!kind.empty()) t.kind = parse_kind(kind, "/task/kind");
  s.integer("dim", t.dim);
  if (s.has("samples_per_user")) {
    const json& v = s.raw("samples_per_user");
    if (v.is_number()) {
      t.samples_per_user.assign(users,
                                Section::integer_value<std::size_t>(v, "/task/samples_per_user"));
    } else if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i)
        t.samples_per_user.push_back(Section::integer_value<std::size_t>(
            v[i], "/task/samples_per_user/" + std::to_string(i)));
    } else {
      throw ConfigError("/task/samples_per_user", "expected an integer or an array");
    }
  }
  s.integer("rows_per_sample", t.rows_per_sample);
  s.number("ridge", t.ridge);
  s.number("label_noise", t.label_noise);
  s.number("heterogeneity", t.heterogeneity);
  return t;
}

const char* to_string(InitStrategy i) {
  return i == InitStrategy::RandomPhase ? "random_phase" : "all_ones";
}
const char* to_string(SplitUpdate s) { return s == SplitUpdate::Coupled ? "coupled" : "per_user"; }
const char* to_string(TaskKind k) { return k == TaskKind::Quadratic ? "quadratic" : "logistic"; }

}  // namespace

std::vector<LinkMode> parse_modes(const std::string& s) {
  if (s == "pam") return {LinkMode::Pam};
  if (s == "baseline") return {LinkMode::Baseline};
  if (s == "both") return {LinkMode::Pam, LinkMode::Baseline};
  throw ConfigError("/mode", "expected \"pam\", \"baseline\" or \"both\"");
}

std::string modes_to_string(const std::vector<LinkMode>& modes) {
  if (modes.size() == 2) return "both";
  return to_string(modes.at(0));
}

void ExperimentConfig::validate() const {
  radio.validate();
  pam.validate();
  if (train.step_size && !(*train.step_size > 0.0))
    throw ConfigError("/train/step_size", "must be positive");
  if (train.local_steps < 1) throw ConfigError("/train/local_steps", "must be >= 1");
  if (task.dim < 1) throw ConfigError("/task/dim", "must be >= 1");
  if (!task.samples_per_user.empty() &&
      task.samples_per_user.size() != static_cast<std::size_t>(radio.users))
    throw ConfigError("/task/samples_per_user",
                      "expected " + std::to_string(radio.users) + " entries");
  for (std::size_t i = 0; i < task.samples_per_user.size(); ++i)
    if (task.samples_per_user[i] == 0)
      throw ConfigError("/task/samples_per_user/" + std::to_string(i), "must be >= 1");
  if (task.rows_per_sample < 1) throw ConfigError("/task/rows_per_sample", "must be >= 1");
  if (!(task.ridge >= 0.0)) throw ConfigError("/task/ridge", "must be >= 0");
  if (!(task.label_noise >= 0.0)) throw ConfigError("/task/label_noise", "must be >= 0");
  if (!(task.heterogeneity >= 0.0)) throw ConfigError("/task/heterogeneity", "must be >= 0");
  if (mc.draws < 2) throw ConfigError("/mc/draws", "must be >= 2");
  if (rounds < 1) throw ConfigError("/rounds", "must be >= 1");
  if (replays < 1) throw ConfigError("/replays", "must be >= 1");
  if (seeds.empty()) throw ConfigError("/seeds", "must not be empty");
  if (modes.empty()) throw ConfigError("/mode", "must select at least one mode");
  if (out.empty()) throw ConfigError("/out", "must not be empty");
  if (threads < 1) throw ConfigError("/threads", "must be >= 1");
}

ExperimentConfigView ExperimentConfig::view() const {
  ExperimentConfigView v;
  v.rounds = rounds;
  v.replays = replays;
  v.modes = modes;
  v.threads = threads;
  return v;
}

ExperimentConfig config_from_json(const json& j) {
  Section s(j, "",
            {"radio", "pam", "train", "task", "mc", "rounds", "replays", "seeds", "mode", "out",
             "threads"});
  ExperimentConfig c;
  if (s.has("radio")) c.radio = read_radio(s.raw("radio"));
  if (s.has("pam")) c.pam = read_pam(s.raw("pam"));
  if (s.has("train")) c.train = read_train(s.raw("train"));
  if (s.has("task")) c.task = read_task(s.raw("task"), c.radio.users);
  if (s.has("mc")) {
    Section m(s.raw("mc"), "/mc", {"draws"});
    m.integer("draws", c.mc.draws);
  }
  s.integer("rounds", c.rounds);
  s.integer("replays", c.replays);
  if (s.has("seeds")) {
    const json& v = s.raw("seeds");
    if (!v.is_array()) throw ConfigError("/seeds", "expected an array of integers");
    c.seeds.clear();
    for (std::size_t i = 0; i < v.size(); ++i)
      c.seeds.push_back(Section::integer_value<std::uint64_t>(v[i], "/seeds/" + std::to_string(i)));
  }
  std::string mode;
  s.string("mode", mode);
  if (!mode.empty()) c.modes = parse_modes(mode);
  s.string("out", c.out);
  s.integer("threads", c.threads);
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json radio = {
      {"antennas", c.radio.antennas},
      {"users", c.radio.users},
      {"pathloss_db", c.radio.pathloss_db},
      {"downlink_pathloss_db",
       c.radio.downlink_pathloss_db.empty() ? c.radio.pathloss_db : c.radio.downlink_pathloss_db},
      {"noise_power_server_w", c.radio.noise_power_server},
      {"noise_power_user_w", c.radio.noise_power_user},
      {"power_budget_w", c.radio.power_budget},
      {"power_scaling", c.radio.power_scaling},
  };
  json pam = {
      {"rho", c.pam.rho},
      {"outer_iters", c.pam.outer_iters},
      {"inner_iters", c.pam.inner_iters},
      {"t_solver_iters", c.pam.t_solver_iters},
      {"t_solver_tol", c.pam.t_solver_tol},
      {"init", to_string(c.pam.init)},
      {"rho_growth", c.pam.rho_growth},
      {"eq17_literal", c.pam.eq17_literal},
      {"split_update", to_string(c.pam.split_update)},
  };
  json train = {{"step_size", c.train.step_size ? json(*c.train.step_size) : json(nullptr)},
                {"local_steps", c.train.local_steps}};
  std::vector<std::size_t> sizes = c.task.samples_per_user;
  if (sizes.empty()) sizes.assign(c.radio.users, 100);
  json task = {
      {"kind", to_string(c.task.kind)},
      {"dim", c.task.dim},
      {"samples_per_user", sizes},
      {"rows_per_sample", c.task.rows_per_sample},
      {"ridge", c.task.ridge},
      {"label_noise", c.task.label_noise},
      {"heterogeneity", c.task.heterogeneity},
  };
  return json{
      {"radio", radio},
      {"pam", pam},
      {"train", train},
      {"task", task},
      {"mc", {{"draws", c.mc.draws}}},
      {"rounds", c.rounds},
      {"replays", c.replays},
      {"seeds", c.seeds},
      {"mode", modes_to_string(c.modes)},
      {"out", c.out},
      {"threads", c.threads},
  };
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    j = json::object();
  } else {
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError("", "'" + path + "' is not valid JSON: " + e.what());
    }
  }
  return config_from_json(j);
}

}  // namespace umwfl
