#include "umwfl/aircomp.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "parallel.hpp"
#include "umwfl/errors.hpp"
#include "umwfl/rng.hpp"

namespace umwfl {

void SystemDims::validate() const {
  if (model_dim < 2 || model_dim % 2 != 0)
    throw DimensionError("model dimension must be even and >= 2, got " +
                         std::to_string(model_dim));
  if (antennas < 1 || users < 1)
    throw DimensionError("antennas and users must be >= 1");
}

AggregationWeights AggregationWeights::from_sizes(std::vector<std::size_t> sizes) {
  if (sizes.empty()) throw DimensionError("aggregation weights need at least one user");
  const double total =
      static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  AggregationWeights w;
  for (auto s : sizes) {
    if (s == 0) throw DimensionError("every user needs a non-empty dataset");
    w.alpha.push_back(static_cast<double>(s) / total);
  }
  w.dataset_sizes = std::move(sizes);
  return w;
}

AggregationWeights AggregationWeights::uniform(int users) {
  return from_sizes(std::vector<std::size_t>(static_cast<std::size_t>(users), 1));
}

EncodeState compute_eta(const std::vector<Eigen::VectorXd>& x_all) {
  if (x_all.empty()) throw DimensionError("compute_eta: no users");
  EncodeState st;
  for (const auto& x : x_all) {
    if (x.size() < 1) throw DimensionError("compute_eta: empty parameter vector");
    if (x.size() != x_all.front().size())
      throw DimensionError("compute_eta: users disagree on model dimension");
    st.per_user.push_back(x.squaredNorm() / static_cast<double>(x.size()));
  }
  st.eta = std::accumulate(st.per_user.begin(), st.per_user.end(), 0.0) /
           static_cast<double>(st.per_user.size());
  if (!(st.eta > 0.0))
    throw NumericError("compute_eta: all parameters are zero, encoding is undefined",
                       st.eta);
  return st;
}

VectorXcd encode(const Eigen::VectorXd& x, cd t, double eta) {
  if (x.size() % 2 != 0)
    throw DimensionError("encode: model dimension " + std::to_string(x.size()) +
                         " is odd");
  if (!(eta > 0.0)) throw NumericError("encode: eta must be positive", eta);
  const Eigen::Index s = x.size() / 2;
  const cd scale = t / std::sqrt(2.0 * eta);
  VectorXcd out(s);
  for (Eigen::Index m = 0; m < s; ++m) out(m) = scale * cd(x(2 * m), x(2 * m + 1));
  return out;
}

MatrixXcd uplink_superimpose(const std::vector<VectorXcd>& s_all,
                             const ChannelRealization& chan, const MatrixXcd& noise) {
  if (s_all.size() != chan.uplink.size())
    throw DimensionError("uplink_superimpose: " + std::to_string(s_all.size()) +
                         " symbol streams for " + std::to_string(chan.uplink.size()) +
                         " users");
  MatrixXcd r = noise;
  for (std::size_t k = 0; k < s_all.size(); ++k) {
    if (chan.uplink[k].size() != r.rows() || s_all[k].size() != r.cols())
      throw DimensionError("uplink_superimpose: user " + std::to_string(k) +
                           " does not match noise shape " + std::to_string(r.rows()) +
                           "x" + std::to_string(r.cols()));
    r.noalias() += chan.uplink[k] * s_all[k].transpose();
  }
  return r;
}

MatrixXcd server_forward(const MatrixXcd& f, const MatrixXcd& received, double gamma) {
  if (!(gamma > 0.0)) throw NumericError("server_forward: gamma must be positive", gamma);
  if (f.cols() != received.rows())
    throw DimensionError("server_forward: F is " + std::to_string(f.rows()) + "x" +
                         std::to_string(f.cols()) + ", R has " +
                         std::to_string(received.rows()) + " rows");
  return std::sqrt(gamma) * (f * received);
}

VectorXcd downlink_receive(const MatrixXcd& forwarded, const VectorXcd& g,
                           const VectorXcd& noise) {
  if (g.size() != forwarded.rows() || noise.size() != forwarded.cols())
    throw DimensionError("downlink_receive: shape mismatch");
  return (g.adjoint() * forwarded).transpose() + noise;
}

Eigen::VectorXd decode(const VectorXcd& y, cd r, double eta) {
  if (!(eta > 0.0)) throw NumericError("decode: eta must be positive", eta);
  const double scale = std::sqrt(2.0 * eta);
  Eigen::VectorXd x(2 * y.size());
  for (Eigen::Index m = 0; m < y.size(); ++m) {
    const cd v = r * y(m);
    x(2 * m) = scale * v.real();
    x(2 * m + 1) = scale * v.imag();
  }
  return x;
}

Eigen::VectorXd global_target(const std::vector<Eigen::VectorXd>& x_all,
                              const AggregationWeights& w) {
  if (x_all.empty() || x_all.size() != w.alpha.size())
    throw DimensionError("global_target: weights do not match users");
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(x_all.front().size());
  for (std::size_t k = 0; k < x_all.size(); ++k) {
    if (x_all[k].size() != theta.size())
      throw DimensionError("global_target: users disagree on model dimension");
    theta += w.alpha[k] * x_all[k];
  }
  return theta;
}

std::vector<Eigen::VectorXd> transmit_round(
    const std::vector<Eigen::VectorXd>& x_all, const MatrixXcd& f,
    const LinkCoefficients& links, const ChannelRealization& chan, double gamma,
    double eta, const MatrixXcd& server_noise, const std::vector<VectorXcd>& user_noise,
    SignalFrame* frame) {
  const std::size_t users = x_all.size();
  if (links.transmit.size() != users || links.receive.size() != users ||
      user_noise.size() != users || chan.downlink.size() != users)
    throw DimensionError("transmit_round: per-user inputs disagree on user count");
  std::vector<VectorXcd> symbols;
  symbols.reserve(users);
  for (std::size_t k = 0; k < users; ++k)
    symbols.push_back(encode(x_all[k], links.transmit[k], eta));
  MatrixXcd received = uplink_superimpose(symbols, chan, server_noise);
  const MatrixXcd forwarded = server_forward(f, received, gamma);
  std::vector<Eigen::VectorXd> decoded;
  decoded.reserve(users);
  std::vector<VectorXcd> ys;
  for (std::size_t k = 0; k < users; ++k) {
    VectorXcd y = downlink_receive(forwarded, chan.downlink[k], user_noise[k]);
    decoded.push_back(decode(y, links.receive[k], eta));
    if (frame) ys.push_back(std::move(y));
  }
  if (frame) {
    frame->symbols = std::move(symbols);
    frame->received = std::move(received);
    frame->user_received = std::move(ys);
  }
  return decoded;
}

double mse_bracket(int k, const MatrixXcd& f, const LinkCoefficients& links,
                   const ChannelRealization& chan, const AggregationWeights& w,
                   const RadioConfig& cfg) {
  const auto users = static_cast<std::size_t>(chan.users());
  if (links.transmit.size() != users || links.receive.size() != users ||
      w.alpha.size() != users || cfg.noise_power_user.size() != users)
    throw DimensionError("mse_bracket: per-user inputs disagree on user count");
  const cd r = links.receive.at(static_cast<std::size_t>(k));
  const Eigen::RowVectorXcd gf = chan.downlink[k].adjoint() * f;  // g_k^H F
  double bias = 0.0;
  for (std::size_t j = 0; j < users; ++j) {
    const cd c = r * (gf * chan.uplink[j])(0) * links.transmit[j];
    bias += std::norm(c - w.alpha[j]);
  }
  const double gamma = cfg.power_scaling;
  return gamma * bias + gamma * cfg.noise_power_server * std::norm(r) * gf.squaredNorm() +
         cfg.noise_power_user[k] * std::norm(r);
}

std::vector<double> analytic_mse(const MatrixXcd& f, const LinkCoefficients& links,
                                 const ChannelRealization& chan,
                                 const AggregationWeights& w, const RadioConfig& cfg,
                                 double eta, int symbols) {
  if (!(eta > 0.0)) throw NumericError("analytic_mse: eta must be positive", eta);
  std::vector<double> out;
  for (int k = 0; k < chan.users(); ++k)
    out.push_back(2.0 * eta * symbols * mse_bracket(k, f, links, chan, w, cfg));
  return out;
}

std::vector<MonteCarloEstimate> monte_carlo_mse(
    const MatrixXcd& f, const LinkCoefficients& links, const ChannelRealization& chan,
    const AggregationWeights& w, const RadioConfig& cfg, double eta, int symbols,
    std::size_t draws, std::uint64_t seed, unsigned threads) {
  if (draws < 1) throw DimensionError("monte_carlo_mse: need at least one draw");
  if (!(eta > 0.0)) throw NumericError("monte_carlo_mse: eta must be positive", eta);
  const int users = chan.users();
  const int n = chan.antennas();
  const int m = 2 * symbols;
  std::vector<double> errors(draws * static_cast<std::size_t>(users));

  detail::parallel_for(draws, threads, [&](std::size_t d) {
    // One substream per draw: parameters, then server noise, then user noise.
    Substream rng(seed, "mc/draw", {d});
    std::vector<Eigen::VectorXd> x_all(users, Eigen::VectorXd(m));
    for (auto& x : x_all)
      for (int i = 0; i < m; ++i) x(i) = rng.gaussian(eta);
    MatrixXcd z(n, symbols);
    for (int c = 0; c < symbols; ++c)
      for (int r = 0; r < n; ++r) z(r, c) = rng.complex_gaussian(cfg.noise_power_server);
    std::vector<VectorXcd> nk(users, VectorXcd(symbols));
    for (int k = 0; k < users; ++k)
      for (int i = 0; i < symbols; ++i) nk[k](i) = rng.complex_gaussian(cfg.noise_power_user[k]);
    const auto decoded =
        transmit_round(x_all, f, links, chan, cfg.power_scaling, eta, z, nk);
    const Eigen::VectorXd theta = global_target(x_all, w);
    for (int k = 0; k < users; ++k)
      errors[d * users + k] = (decoded[k] - theta).squaredNorm();
  });

  std::vector<MonteCarloEstimate> out(users);
  const double nd = static_cast<double>(draws);
  for (int k = 0; k < users; ++k) {
    double sum = 0.0;
    for (std::size_t d = 0; d < draws; ++d) sum += errors[d * users + k];
    const double mean = sum / nd;
    double ss = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
      const double e = errors[d * users + k] - mean;
      ss += e * e;
    }
    out[k].mean = mean;
    out[k].std_error = draws > 1 ? std::sqrt(ss / (nd - 1.0) / nd) : 0.0;
  }
  return out;
}

}  // namespace umwfl
