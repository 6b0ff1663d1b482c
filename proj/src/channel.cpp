#include "umwfl/channel.hpp"

#include <cmath>
#include <string>

#include "umwfl/errors.hpp"
#include "umwfl/rng.hpp"

namespace umwfl {

double db_to_linear(double x_db) { return std::pow(10.0, x_db / 10.0); }

double dbm_to_watts(double x_dbm) { return db_to_linear(x_dbm) / 1000.0; }

RadioConfig RadioConfig::defaults(int antennas, int users) {
  RadioConfig cfg;
  cfg.antennas = antennas;
  cfg.users = users;
  cfg.pathloss_db.assign(users, -40.0);
  cfg.noise_power_server = dbm_to_watts(-80.0);
  cfg.noise_power_user.assign(users, dbm_to_watts(-80.0));
  cfg.power_budget = dbm_to_watts(30.0);
  cfg.power_scaling = 1.0;
  return cfg;
}

void RadioConfig::validate() const {
  if (antennas < 1) throw ConfigError("/radio/antennas", "must be >= 1");
  if (users < 1) throw ConfigError("/radio/users", "must be >= 1");
  const auto k = static_cast<std::size_t>(users);
  if (pathloss_db.size() != k)
    throw ConfigError("/radio/pathloss_db", "expected " + std::to_string(k) + " entries");
  if (!downlink_pathloss_db.empty() && downlink_pathloss_db.size() != k)
    throw ConfigError("/radio/downlink_pathloss_db",
                      "expected " + std::to_string(k) + " entries");
  for (std::size_t i = 0; i < pathloss_db.size(); ++i)
    if (!std::isfinite(pathloss_db[i]))
      throw ConfigError("/radio/pathloss_db/" + std::to_string(i), "must be finite");
  if (!(noise_power_server >= 0.0) || !std::isfinite(noise_power_server))
    throw ConfigError("/radio/noise_power_server_w", "must be a finite non-negative power");
  if (noise_power_user.size() != k)
    throw ConfigError("/radio/noise_power_user_w", "expected " + std::to_string(k) + " entries");
  for (std::size_t i = 0; i < k; ++i)
    if (!(noise_power_user[i] >= 0.0) || !std::isfinite(noise_power_user[i]))
      throw ConfigError("/radio/noise_power_user_w/" + std::to_string(i),
                        "must be a finite non-negative power");
  if (!(power_budget > 0.0) || !std::isfinite(power_budget))
    throw ConfigError("/radio/power_budget_w", "must be positive");
  if (!(power_scaling > 0.0) || !std::isfinite(power_scaling))
    throw ConfigError("/radio/power_scaling", "must be positive");
}

ChannelRealization sample_channels(const RadioConfig& cfg, std::uint64_t seed,
                                   std::uint64_t round) {
  cfg.validate();
  ChannelRealization chan;
  chan.uplink.reserve(cfg.users);
  chan.downlink.reserve(cfg.users);
  for (int k = 0; k < cfg.users; ++k) {
    const auto uk = static_cast<std::uint64_t>(k);
    Substream up(seed, "channel/uplink", {round, uk});
    Substream down(seed, "channel/downlink", {round, uk});
    const double gu = cfg.uplink_gain(k);
    const double gd = cfg.downlink_gain(k);
    VectorXcd h(cfg.antennas), g(cfg.antennas);
    for (int n = 0; n < cfg.antennas; ++n) h(n) = up.complex_gaussian(gu);
    for (int n = 0; n < cfg.antennas; ++n) g(n) = down.complex_gaussian(gd);
    chan.uplink.push_back(std::move(h));
    chan.downlink.push_back(std::move(g));
  }
  return chan;
}

MatrixXcd sample_awgn(Eigen::Index rows, Eigen::Index cols, double variance,
                      std::uint64_t seed, std::string_view label,
                      std::initializer_list<std::uint64_t> indices) {
  if (variance < 0.0 || std::isnan(variance))
    throw NumericError("sample_awgn: negative variance", variance);
  MatrixXcd out = MatrixXcd::Zero(rows, cols);
  if (variance == 0.0) return out;
  Substream s(seed, label, indices);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = s.complex_gaussian(variance);
  return out;
}

}  // namespace umwfl
