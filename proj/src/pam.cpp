#include "umwfl/pam.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "umwfl/errors.hpp"
#include "umwfl/rng.hpp"

namespace umwfl {

void PamConfig::validate() const {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("/pam/rho", "must be positive");
  if (outer_iters < 1) throw ConfigError("/pam/outer_iters", "must be >= 1");
  if (inner_iters < 1) throw ConfigError("/pam/inner_iters", "must be >= 1");
  if (t_solver_iters < 1) throw ConfigError("/pam/t_solver_iters", "must be >= 1");
  if (!(t_solver_tol >= 0.0)) throw ConfigError("/pam/t_solver_tol", "must be >= 0");
  if (!(rho_growth >= 1.0) || !std::isfinite(rho_growth))
    throw ConfigError("/pam/rho_growth", "must be >= 1");
}

namespace {

void check_users(const ChannelRealization& chan, std::size_t users, const char* where) {
  if (static_cast<std::size_t>(chan.users()) != users ||
      chan.downlink.size() != users)
    throw DimensionError(std::string(where) + ": per-user inputs disagree on user count");
}

}  // namespace

StructuredGram<double> PamWorkspace::gram(int k, double ridge) const {
  StructuredGram<double> g;
  g.rank_one_terms = terms.at(k);
  g.kron_scale = kron_scale.at(k);
  g.kron_vector = downlink.at(k);
  g.ridge = ridge;
  return g;
}

PamWorkspace build_workspace(const LinkCoefficients& links, const ChannelRealization& chan,
                             const AggregationWeights& w, const RadioConfig& cfg) {
  const auto users = links.receive.size();
  check_users(chan, users, "build_workspace");
  if (links.transmit.size() != users || w.alpha.size() != users)
    throw DimensionError("build_workspace: per-user inputs disagree on user count");
  PamWorkspace ws;
  ws.antennas = chan.antennas();
  ws.alpha = w.alpha;
  ws.downlink = chan.downlink;
  const Eigen::Index n = ws.antennas;
  for (std::size_t k = 0; k < users; ++k) {
    const cd r = links.receive[k];
    ws.kron_scale.push_back(cfg.noise_power_server * std::norm(r));
    std::vector<VectorXcd> row;
    for (std::size_t j = 0; j < users; ++j) {
      // [r t (h^T kron g^H)]^H = conj(r t) (conj(h) kron g)
      const cd scale = std::conj(r * links.transmit[j]);
      const VectorXcd& h = chan.uplink[j];
      const VectorXcd& g = chan.downlink[k];
      VectorXcd a(n * n);
      for (Eigen::Index c = 0; c < n; ++c)
        a.segment(c * n, n) = scale * std::conj(h(c)) * g;
      row.push_back(std::move(a));
    }
    ws.terms.push_back(std::move(row));
  }
  return ws;
}

double objective_minmax(const MatrixXcd& f, const LinkCoefficients& links,
                        const ChannelRealization& chan, const AggregationWeights& w,
                        const RadioConfig& cfg) {
  double worst = 0.0;
  for (int k = 0; k < chan.users(); ++k)
    worst = std::max(worst, mse_bracket(k, f, links, chan, w, cfg));
  return worst;
}

std::vector<cd> update_r(const MatrixXcd& f, const std::vector<cd>& transmit,
                         const ChannelRealization& chan, const AggregationWeights& w,
                         const RadioConfig& cfg) {
  const auto users = transmit.size();
  check_users(chan, users, "update_r");
  std::vector<cd> r(users);
  for (std::size_t k = 0; k < users; ++k) {
    const Eigen::RowVectorXcd gf = chan.downlink[k].adjoint() * f;
    cd num = 0.0;
    double den = cfg.noise_power_server * gf.squaredNorm() +
                 cfg.noise_power_user[k] / cfg.power_scaling;
    for (std::size_t j = 0; j < users; ++j) {
      const cd c = (gf * chan.uplink[j])(0) * transmit[j];
      num += w.alpha[j] * std::conj(c);
      den += std::norm(c);
    }
    if (!(den > 0.0))
      throw NumericError("update_r: zero denominator for user " + std::to_string(k), den);
    r[k] = num / den;
  }
  return r;
}

MatrixXcd coupling_matrix(const MatrixXcd& f, const std::vector<cd>& receive,
                          const ChannelRealization& chan) {
  const auto users = static_cast<Eigen::Index>(receive.size());
  check_users(chan, receive.size(), "coupling_matrix");
  MatrixXcd c(users, users);
  for (Eigen::Index k = 0; k < users; ++k) {
    const Eigen::RowVectorXcd gf = chan.downlink[k].adjoint() * f;
    for (Eigen::Index j = 0; j < users; ++j)
      c(k, j) = receive[k] * (gf * chan.uplink[j])(0);
  }
  return c;
}

namespace {

double transmit_term(const MatrixXcd& c, const std::vector<double>& alpha,
                     const std::vector<cd>& t, Eigen::Index k) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < c.cols(); ++j) s += std::norm(c(k, j) * t[j] - alpha[j]);
  return s;
}

cd project_power(cd t, double budget) {
  const double mag = std::abs(t);
  const double cap = std::sqrt(budget);
  return mag > cap ? t * (cap / mag) : t;
}

}  // namespace

double transmit_objective(const MatrixXcd& coupling, const std::vector<double>& alpha,
                          const std::vector<cd>& transmit) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < coupling.rows(); ++k)
    worst = std::max(worst, transmit_term(coupling, alpha, transmit, k));
  return worst;
}

std::vector<cd> update_t(const MatrixXcd& coupling, const std::vector<double>& alpha,
                         double power_budget, const std::vector<cd>& initial,
                         const TransmitSolverOptions& opts) {
  const auto users = static_cast<Eigen::Index>(initial.size());
  if (coupling.rows() != users || coupling.cols() != users ||
      alpha.size() != initial.size())
    throw DimensionError("update_t: coupling, weights and start disagree on user count");
  if (!(power_budget > 0.0))
    throw NumericError("update_t: power budget must be positive", power_budget);

  std::vector<cd> t(initial.size());
  for (std::size_t j = 0; j < t.size(); ++j) t[j] = project_power(initial[j], power_budget);
  std::vector<cd> best = t;
  double best_val = transmit_objective(coupling, alpha, t);

  const double lipschitz = coupling.cwiseAbs2().rowwise().sum().maxCoeff();
  if (!(lipschitz > 0.0)) return best;

  std::vector<cd> grad(t.size());
  for (int it = 0; it < opts.iters; ++it) {
    // Subgradient of the pointwise max from its first maximizing user.
    Eigen::Index arg = 0;
    double worst = -1.0;
    for (Eigen::Index k = 0; k < users; ++k) {
      const double v = transmit_term(coupling, alpha, t, k);
      if (v > worst) {
        worst = v;
        arg = k;
      }
    }
    double gnorm = 0.0;
    for (Eigen::Index j = 0; j < users; ++j) {
      grad[j] = std::conj(coupling(arg, j)) * (coupling(arg, j) * t[j] - alpha[j]);
      gnorm += std::norm(grad[j]);
    }
    if (gnorm == 0.0) break;
    const double step = 1.0 / (lipschitz * std::sqrt(static_cast<double>(it) + 1.0));
    double moved = 0.0;
    for (Eigen::Index j = 0; j < users; ++j) {
      const cd next = project_power(t[j] - step * grad[j], power_budget);
      moved += std::norm(next - t[j]);
      t[j] = next;
    }
    const double val = transmit_objective(coupling, alpha, t);
    if (val < best_val) {
      best_val = val;
      best = t;
    }
    if (std::sqrt(moved) < opts.tol) break;
  }
  return best;
}

std::vector<cd> update_t(const MatrixXcd& f, const std::vector<cd>& receive,
                         const ChannelRealization& chan, const AggregationWeights& w,
                         const RadioConfig& cfg, const std::vector<cd>& initial,
                         const TransmitSolverOptions& opts) {
  return update_t(coupling_matrix(f, receive, chan), w.alpha, cfg.power_budget, initial,
                  opts);
}

double u_update_ridge(double rho, int users, bool eq17_literal) {
  return eq17_literal ? rho : rho / users;
}

std::vector<StructuredGramFactor<double>> factor_workspace(const PamWorkspace& ws,
                                                           double ridge) {
  std::vector<StructuredGramFactor<double>> out;
  const Eigen::Index dim = Eigen::Index(ws.antennas) * ws.antennas;
  for (int k = 0; k < ws.users(); ++k) out.emplace_back(ws.gram(k, ridge), dim);
  return out;
}

std::vector<VectorXcd> update_u(const PamWorkspace& ws,
                                const std::vector<StructuredGramFactor<double>>& factors,
                                const VectorXcd& f, double rho) {
  const int users = ws.users();
  if (static_cast<int>(factors.size()) != users)
    throw DimensionError("update_u: one factorization per user expected");
  std::vector<VectorXcd> u;
  u.reserve(users);
  for (int k = 0; k < users; ++k) {
    VectorXcd rhs = (rho / users) * f;
    for (int j = 0; j < users; ++j) rhs += ws.alpha[j] * ws.terms[k][j];
    u.push_back(factors[k].solve(rhs));
  }
  return u;
}

std::vector<VectorXcd> update_u(const PamWorkspace& ws, const VectorXcd& f, double rho,
                                bool eq17_literal) {
  return update_u(ws, factor_workspace(ws, u_update_ridge(rho, ws.users(), eq17_literal)),
                  f, rho);
}

CoupledSplitSolver::CoupledSplitSolver(const PamWorkspace& ws) : ws_(&ws) {
  const int users = ws.users();
  const Eigen::Index n = ws.antennas;
  alpha_ = Eigen::Map<const Eigen::VectorXd>(ws.alpha.data(), users);
  for (int k = 0; k < users; ++k) {
    UserModel m;
    m.terms.resize(n * n, users);
    for (int j = 0; j < users; ++j) m.terms.col(j) = ws.terms[k][j];
    const double gnorm = ws.downlink[k].norm();
    if (ws.kron_scale[k] > 0.0 && gnorm > 0.0) {
      m.ghat = ws.downlink[k] / gnorm;
      m.kron_eig = ws.kron_scale[k] * gnorm * gnorm;
    } else {
      m.ghat = VectorXcd::Zero(n);
    }
    m.block_proj.resize(n, users);
    for (Eigen::Index b = 0; b < n; ++b)
      m.block_proj.row(b) = m.ghat.adjoint() * m.terms.middleRows(b * n, n);
    m.gram = m.terms.adjoint() * m.terms;
    m.gram_proj = m.block_proj.adjoint() * m.block_proj;
    users_.push_back(std::move(m));
  }
}

CoupledSplitSolver::Projections CoupledSplitSolver::project(int k,
                                                             const VectorXcd& f) const {
  const UserModel& m = users_[k];
  const Eigen::Index n = ws_->antennas;
  const Eigen::Index users = m.gram.rows();
  const VectorXcd alpha = alpha_.cast<cd>();
  VectorXcd gf(n);
  for (Eigen::Index b = 0; b < n; ++b) gf(b) = m.ghat.dot(f.segment(b * n, n));
  Projections p;
  p.af = m.terms.adjoint() * f;
  p.paf = m.block_proj.adjoint() * gf;
  p.pf2 = gf.squaredNorm();
  p.gram_alpha = m.gram * alpha;
  p.proj_alpha = m.gram_proj * alpha;
  p.alpha_proj_alpha = alpha.dot(p.proj_alpha).real();
  p.alpha_paf = alpha.dot(p.paf).real();
  for (VectorXcd* v : {&p.ahv, &p.ahpv, &p.w, &p.y, &p.ahu, &p.tmp}) v->resize(users);
  p.cap.resize(users, users);
  p.cap_minus_i.resize(users, users);
  p.ldlt = Eigen::LDLT<MatrixXcd>(users);
  return p;
}

// With B = s P + beta I (P = I kron ghat ghat^H, s = c ||g||^2) and
// v = b + beta f, b = A alpha, the minimizer is u = (A A^H + B)^{-1} v.
// Everything needed for T(u) = ||A^H u - alpha||^2 + s ||P u||^2 reduces to
// K x K algebra on A^H A, A^H P A and the projections of f.
double CoupledSplitSolver::data_term(int k, const Projections& p, double kappa,
                                     double lambda) const {
  const UserModel& m = users_[k];
  const double s = m.kron_eig;
  if (lambda <= 0.0) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < p.af.size(); ++j) d += std::norm(p.af(j) - alpha_(j));
    return d + s * p.pf2;
  }

  const double beta = kappa / lambda;
  const double inv_s = 1.0 / (s + beta);
  const double inv_b = 1.0 / beta;

  p.ahv = p.gram_alpha + beta * p.af;
  p.ahpv = p.proj_alpha + beta * p.paf;
  p.w = inv_s * p.ahpv + inv_b * (p.ahv - p.ahpv);
  p.cap_minus_i = inv_s * m.gram_proj + inv_b * (m.gram - m.gram_proj);
  p.cap = p.cap_minus_i;
  p.cap.diagonal().array() += 1.0;
  p.ldlt.compute(p.cap);
  p.y = p.ldlt.solve(p.w);
  p.ahu = p.w;
  p.ahu.noalias() -= p.cap_minus_i * p.y;

  double pu2 = 0.0;
  if (s > 0.0) {
    const double vpv = p.alpha_proj_alpha + 2.0 * beta * p.alpha_paf + beta * beta * p.pf2;
    p.tmp.noalias() = m.gram_proj * p.y;
    pu2 = inv_s * inv_s * (vpv - 2.0 * p.y.dot(p.ahpv).real() + p.y.dot(p.tmp).real());
    pu2 = std::max(pu2, 0.0);
  }
  double d = 0.0;
  for (Eigen::Index j = 0; j < p.ahu.size(); ++j) d += std::norm(p.ahu(j) - alpha_(j));
  return d + s * pu2;
}

double CoupledSplitSolver::data_term_at(int k, const VectorXcd& f, double rho,
                                        double lambda) const {
  return data_term(k, project(k, f), rho / ws_->users(), lambda);
}

CoupledSplitSolver::Result CoupledSplitSolver::solve(const VectorXcd& f,
                                                     double rho) const {
  const int users = ws_->users();
  const Eigen::Index dim = Eigen::Index(ws_->antennas) * ws_->antennas;
  if (f.size() != dim) throw DimensionError("CoupledSplitSolver: f has wrong length");
  const double kappa = rho / users;

  std::vector<Projections> proj;
  std::vector<double> t_free(users), t_full(users);  // T_k at lambda = 0 and 1
  for (int k = 0; k < users; ++k) {
    proj.push_back(project(k, f));
    t_free[k] = data_term(k, proj[k], kappa, 0.0);
    t_full[k] = data_term(k, proj[k], kappa, 1.0);
  }

  using boost::math::tools::eps_tolerance;
  using boost::math::tools::toms748_solve;

  // lambda_k(level): T_k(lambda) is non-increasing in lambda; clamp to [0, 1].
  auto weight_for = [&](int k, double level) {
    if (t_free[k] <= level) return 0.0;
    if (t_full[k] >= level) return 1.0;
    std::uintmax_t iters = 200;
    auto r = toms748_solve(
        [&](double lam) { return data_term(k, proj[k], kappa, lam) - level; }, 0.0, 1.0,
        t_free[k] - level, t_full[k] - level, eps_tolerance<double>(52), iters);
    return 0.5 * (r.first + r.second);
  };
  auto weight_sum = [&](double level) {
    double sum = 0.0;
    for (int k = 0; k < users; ++k) sum += weight_for(k, level);
    return sum - 1.0;
  };

  // The common level lies between max_k T_k(1) (some user has lambda >= 1/K
  // <= 1) and max_k T_k(0) (all weights vanish).
  const double lo = *std::max_element(t_full.begin(), t_full.end());
  const double hi = *std::max_element(t_free.begin(), t_free.end());

  Result res;
  res.weights.assign(users, 0.0);
  if (!(hi - lo > 1e-15 * std::max(1.0, hi))) {
    const auto top = std::max_element(t_free.begin(), t_free.end()) - t_free.begin();
    res.weights[top] = 1.0;
    res.level = hi;
  } else {
    const double at_lo = weight_sum(lo);
    if (at_lo <= 0.0) {
      res.level = lo;
    } else {
      std::uintmax_t iters = 200;
      auto r = toms748_solve(weight_sum, lo, hi, at_lo, -1.0, eps_tolerance<double>(52),
                             iters);
      res.level = 0.5 * (r.first + r.second);
    }
    double total = 0.0;
    for (int k = 0; k < users; ++k) total += res.weights[k] = weight_for(k, res.level);
    // Users whose data term is flat along the path do not care about their
    // weight; rescaling keeps the simplex constraint.
    if (total > 0.0)
      for (auto& wk : res.weights) wk /= total;
  }

  res.u.reserve(users);
  for (int k = 0; k < users; ++k) {
    const double lam = res.weights[k];
    if (lam <= 0.0) {
      res.u.push_back(f);
      continue;
    }
    const double beta = kappa / lam;
    VectorXcd rhs = beta * f;
    for (int j = 0; j < users; ++j) rhs += ws_->alpha[j] * ws_->terms[k][j];
    res.u.push_back(StructuredGramFactor<double>(ws_->gram(k, beta), dim).solve(rhs));
  }
  return res;
}

VectorXcd update_f(const std::vector<VectorXcd>& u_all, const VectorXcd& z) {
  if (u_all.empty()) throw DimensionError("update_f: no split variables");
  VectorXcd mean = VectorXcd::Zero(z.size());
  for (const auto& u : u_all) {
    if (u.size() != z.size()) throw DimensionError("update_f: length mismatch");
    mean += u;
  }
  mean /= static_cast<double>(u_all.size());
  return 0.5 * (mean + z);
}

VectorXcd update_z(const VectorXcd& f) { return phase_project(f); }

double penalized_objective(const std::vector<VectorXcd>& u_all, const VectorXcd& f,
                           const VectorXcd& z, const PamWorkspace& ws, double rho) {
  const int users = ws.users();
  if (static_cast<int>(u_all.size()) != users)
    throw DimensionError("penalized_objective: one split variable per user expected");
  const Eigen::Index n = ws.antennas;
  double worst = 0.0;
  for (int k = 0; k < users; ++k) {
    double v = 0.0;
    for (int j = 0; j < users; ++j)
      v += std::norm(ws.terms[k][j].dot(u_all[k]) - ws.alpha[j]);
    if (ws.kron_scale[k] != 0.0) {
      const MatrixXcd uk = mat_of_vector(u_all[k], n, n);
      v += ws.kron_scale[k] * (ws.downlink[k].adjoint() * uk).squaredNorm();
    }
    worst = std::max(worst, v);
  }
  double consensus = 0.0;
  for (const auto& u : u_all) consensus += (u - f).squaredNorm();
  return worst + rho * (consensus / users + (z - f).squaredNorm());
}

InnerResult inner_pam(const PamWorkspace& ws, const MatrixXcd& initial, double rho,
                      int cycles, SplitUpdate mode, bool eq17_literal) {
  if (cycles < 1) throw DimensionError("inner_pam: need at least one cycle");
  const Eigen::Index n = ws.antennas;
  if (initial.rows() != n || initial.cols() != n)
    throw DimensionError("inner_pam: initial F has wrong shape");
  std::vector<StructuredGramFactor<double>> factors;
  std::optional<CoupledSplitSolver> coupled;
  if (mode == SplitUpdate::PerUser)
    factors = factor_workspace(ws, u_update_ridge(rho, ws.users(), eq17_literal));
  else
    coupled.emplace(ws);

  VectorXcd f = vec_of_matrix(initial);
  VectorXcd z = f;
  std::vector<VectorXcd> u(ws.users(), f);
  InnerResult out;
  out.trajectory.reserve(cycles + 1);
  out.trajectory.push_back(penalized_objective(u, f, z, ws, rho));
  for (int m = 0; m < cycles; ++m) {
    u = coupled ? coupled->solve(f, rho).u : update_u(ws, factors, f, rho);
    f = update_f(u, z);
    z = update_z(f);
    out.trajectory.push_back(penalized_objective(u, f, z, ws, rho));
  }
  out.phase_shifts = mat_of_vector(z, n, n);
  return out;
}

MatrixXcd initial_phase_shifts(int antennas, InitStrategy init, std::uint64_t seed,
                               std::uint64_t stream) {
  if (init == InitStrategy::AllOnes) return MatrixXcd::Ones(antennas, antennas);
  Substream s(seed, "pam/init", {stream});
  MatrixXcd f(antennas, antennas);
  for (Eigen::Index c = 0; c < f.cols(); ++c)
    for (Eigen::Index r = 0; r < f.rows(); ++r)
      f(r, c) = std::polar(1.0, 2.0 * std::numbers::pi * s.uniform());
  return f;
}

namespace {

Solution alternate(const ChannelRealization& chan, const AggregationWeights& w,
                   const RadioConfig& cfg, const PamConfig& pam, MatrixXcd f,
                   bool optimize_phase) {
  cfg.validate();
  pam.validate();
  const auto users = static_cast<std::size_t>(chan.users());
  if (w.alpha.size() != users || users != static_cast<std::size_t>(cfg.users))
    throw DimensionError("run_pam: weights, radio config and channel disagree on users");
  const TransmitSolverOptions topts{pam.t_solver_iters, pam.t_solver_tol};

  Solution sol;
  sol.links.transmit.assign(users, cd(std::sqrt(cfg.power_budget), 0.0));
  sol.links.receive = update_r(f, sol.links.transmit, chan, w, cfg);
  sol.objective_trajectory.push_back(objective_minmax(f, sol.links, chan, w, cfg));

  double rho = pam.rho;
  for (int n = 0; n < pam.outer_iters; ++n) {
    if (optimize_phase) {
      const PamWorkspace ws = build_workspace(sol.links, chan, w, cfg);
      InnerResult inner =
          inner_pam(ws, f, rho, pam.inner_iters, pam.split_update, pam.eq17_literal);
      f = std::move(inner.phase_shifts);
      sol.inner_trajectories.push_back(std::move(inner.trajectory));
    }
    BlockRecord rec;
    rec.r_before = objective_minmax(f, sol.links, chan, w, cfg);
    sol.links.receive = update_r(f, sol.links.transmit, chan, w, cfg);
    rec.r_after = objective_minmax(f, sol.links, chan, w, cfg);

    const MatrixXcd c = coupling_matrix(f, sol.links.receive, chan);
    rec.t_before = transmit_objective(c, w.alpha, sol.links.transmit);
    sol.links.transmit = update_t(c, w.alpha, cfg.power_budget, sol.links.transmit, topts);
    rec.t_after = transmit_objective(c, w.alpha, sol.links.transmit);
    sol.blocks.push_back(rec);

    sol.objective_trajectory.push_back(objective_minmax(f, sol.links, chan, w, cfg));
    rho *= pam.rho_growth;
  }
  sol.phase_shifts = std::move(f);
  return sol;
}

}  // namespace

Solution run_pam(const ChannelRealization& chan, const AggregationWeights& w,
                 const RadioConfig& cfg, const PamConfig& pam, std::uint64_t stream) {
  return alternate(chan, w, cfg, pam,
                   initial_phase_shifts(chan.antennas(), pam.init, pam.seed, stream), true);
}

Solution run_baseline(const ChannelRealization& chan, const AggregationWeights& w,
                      const RadioConfig& cfg, const PamConfig& pam) {
  return alternate(chan, w, cfg, pam, MatrixXcd::Identity(chan.antennas(), chan.antennas()),
                   false);
}

}  // namespace umwfl
