#pragma once

// Over-the-air aggregation round: pack real parameters into complex symbols,
// superimpose them on the uplink, apply the server's phase-shift network,
// broadcast, and unpack at each user. Also the closed-form per-user MSE and
// a Monte Carlo estimator that replays the physical chain.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "umwfl/channel.hpp"
#include "umwfl/numeric.hpp"

namespace umwfl {

/// Model dimension M (real parameters) and S = M/2 complex symbols.
struct SystemDims {
  int model_dim = 2;
  int antennas = 1;
  int users = 1;

  int symbols() const { return model_dim / 2; }
  /// Throws DimensionError if M is odd or < 2, or N, K < 1.
  void validate() const;
};

/// Transmit coefficients t_k (sqrt(W)) and receive normalizers r_k.
struct LinkCoefficients {
  std::vector<cd> transmit;
  std::vector<cd> receive;
};

/// alpha_k = |D_k| / sum_l |D_l|.
struct AggregationWeights {
  std::vector<double> alpha;
  std::vector<std::size_t> dataset_sizes;

  static AggregationWeights from_sizes(std::vector<std::size_t> sizes);
  static AggregationWeights uniform(int users);
  int users() const { return static_cast<int>(alpha.size()); }
};

/// eta = mean_k ||x_k||^2 / M.
struct EncodeState {
  double eta = 0;
  std::vector<double> per_user;
};

/// Symbols s_k, superimposed R, and per-user received y_k of one round.
struct SignalFrame {
  std::vector<VectorXcd> symbols;
  MatrixXcd received;
  std::vector<VectorXcd> user_received;
};

EncodeState compute_eta(const std::vector<Eigen::VectorXd>& x_all);

/// s_m = t / sqrt(2 eta) * (x_{2m} + j x_{2m+1}) (zero-based).
VectorXcd encode(const Eigen::VectorXd& x, cd t, double eta);

/// R = sum_k h_k s_k^T + Z.
MatrixXcd uplink_superimpose(const std::vector<VectorXcd>& s_all,
                             const ChannelRealization& chan, const MatrixXcd& noise);

/// sqrt(gamma) F R. F need not be unit-modulus.
MatrixXcd server_forward(const MatrixXcd& f, const MatrixXcd& received, double gamma);

/// y^T = g^H fwd + n^T.
VectorXcd downlink_receive(const MatrixXcd& forwarded, const VectorXcd& g,
                           const VectorXcd& noise);

/// x = sqrt(2 eta) [Re(r y_1), Im(r y_1), ..., Re(r y_S), Im(r y_S)].
Eigen::VectorXd decode(const VectorXcd& y, cd r, double eta);

/// theta = sum_k alpha_k x_k.
Eigen::VectorXd global_target(const std::vector<Eigen::VectorXd>& x_all,
                              const AggregationWeights& w);

/// Runs encode -> superimpose -> forward -> receive -> decode with the given
/// noise realizations (server_noise is N x S, user_noise[k] has length S).
/// Returns the decoded x_k for every user; fills `frame` when non-null.
std::vector<Eigen::VectorXd> transmit_round(
    const std::vector<Eigen::VectorXd>& x_all, const MatrixXcd& f,
    const LinkCoefficients& links, const ChannelRealization& chan, double gamma,
    double eta, const MatrixXcd& server_noise,
    const std::vector<VectorXcd>& user_noise, SignalFrame* frame = nullptr);

/// Bracketed per-user MSE without the 2 eta S factor:
///   gamma sum_j |r_k g_k^H F h_j t_j - alpha_j|^2
///     + gamma sigma_b^2 ||r_k g_k^H F||^2 + sigma_k^2 |r_k|^2
double mse_bracket(int k, const MatrixXcd& f, const LinkCoefficients& links,
                   const ChannelRealization& chan, const AggregationWeights& w,
                   const RadioConfig& cfg);

/// Closed-form E||x_k(next) - theta||^2 for every user: 2 eta S * mse_bracket.
std::vector<double> analytic_mse(const MatrixXcd& f, const LinkCoefficients& links,
                                 const ChannelRealization& chan,
                                 const AggregationWeights& w, const RadioConfig& cfg,
                                 double eta, int symbols);

struct MonteCarloEstimate {
  double mean = 0;
  double std_error = 0;
};

/// Sample estimate of E||x_k(next) - theta||^2. Each draw uses synthetic
/// parameters with i.i.d. N(0, eta) entries and fresh noise, all from
/// substreams keyed by (seed, draw), so the result does not depend on
/// `threads`.
std::vector<MonteCarloEstimate> monte_carlo_mse(
    const MatrixXcd& f, const LinkCoefficients& links, const ChannelRealization& chan,
    const AggregationWeights& w, const RadioConfig& cfg, double eta, int symbols,
    std::size_t draws, std::uint64_t seed, unsigned threads = 1);

}  // namespace umwfl
