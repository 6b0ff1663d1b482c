#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

#include "umwfl/numeric.hpp"

namespace umwfl {

double db_to_linear(double x_db);
double dbm_to_watts(double x_dbm);

/// Radio parameters of one edge server with N antennas and K single-antenna
/// users. Powers are in watts, pathloss in dB.
struct RadioConfig {
  int antennas = 8;
  int users = 3;
  std::vector<double> pathloss_db;           // per user, uplink
  std::vector<double> downlink_pathloss_db;  // per user; empty = same as uplink
  double noise_power_server = 1e-11;         // sigma_b^2
  std::vector<double> noise_power_user;      // sigma_k^2 per user
  double power_budget = 1.0;                 // P0
  double power_scaling = 1.0;                // gamma

  /// N antennas, K users, -40 dB pathloss, -80 dBm noise, P0 = 1 W, gamma = 1.
  static RadioConfig defaults(int antennas = 8, int users = 3);

  /// Throws ConfigError on violated invariants.
  void validate() const;

  double uplink_gain(int k) const { return db_to_linear(pathloss_db.at(k)); }
  double downlink_gain(int k) const {
    return db_to_linear(downlink_pathloss_db.empty() ? pathloss_db.at(k)
                                                     : downlink_pathloss_db.at(k));
  }
};

/// Uplink h_k and downlink g_k for one block-fading round.
struct ChannelRealization {
  std::vector<VectorXcd> uplink;
  std::vector<VectorXcd> downlink;

  int users() const { return static_cast<int>(uplink.size()); }
  int antennas() const { return uplink.empty() ? 0 : static_cast<int>(uplink[0].size()); }
};

/// Draws h_k, g_k ~ CN(0, gain_k I_N) i.i.d. Each (round, user, direction)
/// uses its own substream.
ChannelRealization sample_channels(const RadioConfig& cfg, std::uint64_t seed,
                                   std::uint64_t round = 0);

/// rows x cols matrix of i.i.d. CN(0, variance) entries from the substream
/// (seed, label, indices). Variance 0 gives zeros.
MatrixXcd sample_awgn(Eigen::Index rows, Eigen::Index cols, double variance,
                      std::uint64_t seed, std::string_view label,
                      std::initializer_list<std::uint64_t> indices = {});

}  // namespace umwfl
