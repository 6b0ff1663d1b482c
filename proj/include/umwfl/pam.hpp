#pragma once

// Min-max MSE design of (F, r, t) for one aggregation round by penalty
// alternating minimization.
//
// Outer loop: alternate over the phase-shift network F, the receive
// normalizers r_k (closed form) and the transmit coefficients t_k (convex
// min-max, projected subgradient). The F-block is handled by an inner loop
// that splits f = vec(F) into per-user copies u_k and a unit-modulus copy
// z, tied together by quadratic penalties, and minimizes over u, f, z in
// turn. Every inner block has a closed-form minimizer.

#include <cstdint>
#include <vector>

#include "umwfl/aircomp.hpp"
#include "umwfl/channel.hpp"
#include "umwfl/numeric.hpp"

namespace umwfl {

enum class InitStrategy { RandomPhase, AllOnes };

/// How the split variables u_k are updated inside the inner loop.
///  - Coupled: exact minimizer of the penalized objective over all u_k
///    jointly (the max over users couples them).
///  - PerUser: each u_k minimizes its own data term plus its own penalty,
///    ignoring the coupling through the max.
enum class SplitUpdate { Coupled, PerUser };

struct PamConfig {
  double rho = 1.0;          // penalty weight
  int outer_iters = 20;      // N_max
  int inner_iters = 50;      // M_max
  int t_solver_iters = 2000;
  double t_solver_tol = 1e-12;
  InitStrategy init = InitStrategy::RandomPhase;
  double rho_growth = 1.0;   // rho <- rho * rho_growth after each outer iteration
  bool eq17_literal = false; // PerUser only: ridge rho instead of rho/K
  SplitUpdate split_update = SplitUpdate::Coupled;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-user data of the F-subproblem in vectorized form:
///   r_k g_k^H F h_j t_j = a_{k,j}^H vec(F)
///   sigma_b^2 ||r_k g_k^H F||^2 = vec(F)^H (c_k I_N kron g_k g_k^H) vec(F)
struct PamWorkspace {
  int antennas = 0;
  std::vector<double> kron_scale;                // c_k = sigma_b^2 |r_k|^2
  std::vector<VectorXcd> downlink;               // g_k
  std::vector<std::vector<VectorXcd>> terms;     // terms[k][j] = a_{k,j}
  std::vector<double> alpha;

  int users() const { return static_cast<int>(terms.size()); }
  StructuredGram<double> gram(int k, double ridge) const;
};

PamWorkspace build_workspace(const LinkCoefficients& links, const ChannelRealization& chan,
                             const AggregationWeights& w, const RadioConfig& cfg);

/// max_k of the bracketed MSE (the per-round design objective).
double objective_minmax(const MatrixXcd& f, const LinkCoefficients& links,
                        const ChannelRealization& chan, const AggregationWeights& w,
                        const RadioConfig& cfg);

/// Closed-form minimizer of each user's bracketed MSE over r_k.
std::vector<cd> update_r(const MatrixXcd& f, const std::vector<cd>& transmit,
                         const ChannelRealization& chan, const AggregationWeights& w,
                         const RadioConfig& cfg);

/// C_{k,j} = r_k g_k^H F h_j.
MatrixXcd coupling_matrix(const MatrixXcd& f, const std::vector<cd>& receive,
                          const ChannelRealization& chan);

/// max_k sum_j |C_{k,j} t_j - alpha_j|^2.
double transmit_objective(const MatrixXcd& coupling, const std::vector<double>& alpha,
                          const std::vector<cd>& transmit);

struct TransmitSolverOptions {
  int iters = 2000;
  double tol = 1e-12;
};

/// Minimizes transmit_objective over |t_k|^2 <= P0 by projected subgradient
/// starting from `initial`. Returns the best iterate seen; never worse than
/// the (projected) starting point.
std::vector<cd> update_t(const MatrixXcd& coupling, const std::vector<double>& alpha,
                         double power_budget, const std::vector<cd>& initial,
                         const TransmitSolverOptions& opts = {});

std::vector<cd> update_t(const MatrixXcd& f, const std::vector<cd>& receive,
                         const ChannelRealization& chan, const AggregationWeights& w,
                         const RadioConfig& cfg, const std::vector<cd>& initial,
                         const TransmitSolverOptions& opts = {});

/// Factorizations of the u-update systems for a fixed ridge.
std::vector<StructuredGramFactor<double>> factor_workspace(const PamWorkspace& ws,
                                                           double ridge);

/// Ridge of the u-update: rho / K, or rho when reproducing the literal
/// closed form with mismatched ridge.
double u_update_ridge(double rho, int users, bool eq17_literal);

/// u_k = (sum_j a a^H + G_k + ridge I)^{-1} (sum_j alpha_j a_{k,j} + (rho/K) f).
std::vector<VectorXcd> update_u(const PamWorkspace& ws,
                                const std::vector<StructuredGramFactor<double>>& factors,
                                const VectorXcd& f, double rho);
std::vector<VectorXcd> update_u(const PamWorkspace& ws, const VectorXcd& f, double rho,
                                bool eq17_literal = false);

/// Exact minimizer over {u_k} of
///
///   max_k T_k(u_k) + (rho/K) sum_k ||u_k - f||^2,
///   T_k(u) = sum_j |a_{k,j}^H u - alpha_j|^2 + u^H G_k u,
///
/// for fixed f. By minimax duality the solution is
///   u_k = argmin lambda_k T_k(u) + (rho/K) ||u - f||^2
/// for weights lambda on the simplex that equalize T_k over the users with
/// lambda_k > 0, i.e. the per-user closed form with ridge rho/(K lambda_k).
/// The weights are found by scalar root finding on K x K reductions of each
/// user's system, so one cycle stays O(K^2 N^2).
class CoupledSplitSolver {
 public:
  explicit CoupledSplitSolver(const PamWorkspace& ws);

  struct Result {
    std::vector<VectorXcd> u;
    std::vector<double> weights;  // lambda
    double level = 0;             // common data-term value of active users
  };

  Result solve(const VectorXcd& f, double rho) const;

  /// T_k of the minimizer of lambda T_k(u) + (rho/K)||u - f||^2, evaluated
  /// without forming u. Exposed for tests.
  double data_term_at(int k, const VectorXcd& f, double rho, double lambda) const;

 private:
  struct UserModel {
    MatrixXcd terms;       // A_k, N^2 x K
    MatrixXcd block_proj;  // row b: ghat^H A_k(block b), N x K
    VectorXcd ghat;        // unit direction of g_k (zero if no Kronecker part)
    double kron_eig = 0;   // c_k ||g_k||^2
    MatrixXcd gram;        // A^H A
    MatrixXcd gram_proj;   // A^H P A
  };
  // Per-cycle quantities of one user plus scratch space for data_term.
  struct Projections {
    VectorXcd af;           // A^H f
    VectorXcd paf;          // A^H P f
    double pf2 = 0;         // ||P f||^2
    VectorXcd gram_alpha;   // A^H A alpha
    VectorXcd proj_alpha;   // A^H P A alpha
    double alpha_proj_alpha = 0;
    double alpha_paf = 0;   // Re(alpha^T A^H P f)
    mutable VectorXcd ahv, ahpv, w, y, ahu, tmp;
    mutable MatrixXcd cap, cap_minus_i;
    mutable Eigen::LDLT<MatrixXcd> ldlt;
  };

  Projections project(int k, const VectorXcd& f) const;
  double data_term(int k, const Projections& p, double kappa, double lambda) const;

  const PamWorkspace* ws_;
  Eigen::VectorXd alpha_;
  std::vector<UserModel> users_;
};

/// f = ((1/K) sum_j u_j + z) / 2.
VectorXcd update_f(const std::vector<VectorXcd>& u_all, const VectorXcd& z);

/// Unit-modulus projection of f.
VectorXcd update_z(const VectorXcd& f);

/// max_k [sum_j |a_{k,j}^H u_k - alpha_j|^2 + u_k^H G_k u_k]
///   + rho ((1/K) sum_j ||u_j - f||^2 + ||z - f||^2)
double penalized_objective(const std::vector<VectorXcd>& u_all, const VectorXcd& f,
                           const VectorXcd& z, const PamWorkspace& ws, double rho);

struct InnerResult {
  MatrixXcd phase_shifts;
  /// Penalized objective at the initial point followed by one entry per cycle.
  std::vector<double> trajectory;
};

InnerResult inner_pam(const PamWorkspace& ws, const MatrixXcd& initial, double rho,
                      int cycles, SplitUpdate mode = SplitUpdate::Coupled,
                      bool eq17_literal = false);

/// Objective values around the r- and t-blocks of one outer iteration.
struct BlockRecord {
  double r_before = 0, r_after = 0;  // objective_minmax at fixed (F, t)
  double t_before = 0, t_after = 0;  // transmit_objective at fixed (F, r)
};

struct Solution {
  MatrixXcd phase_shifts;
  LinkCoefficients links;
  /// objective_minmax after initialization, then after every outer iteration.
  std::vector<double> objective_trajectory;
  std::vector<std::vector<double>> inner_trajectories;
  std::vector<BlockRecord> blocks;
};

MatrixXcd initial_phase_shifts(int antennas, InitStrategy init, std::uint64_t seed,
                               std::uint64_t stream);

/// Full alternating design. `stream` selects the substream of the random
/// initializer so several designs can share one seed.
Solution run_pam(const ChannelRealization& chan, const AggregationWeights& w,
                 const RadioConfig& cfg, const PamConfig& pam, std::uint64_t stream = 0);

/// Fixed F = I_N; only r and t alternate.
Solution run_baseline(const ChannelRealization& chan, const AggregationWeights& w,
                      const RadioConfig& cfg, const PamConfig& pam);

}  // namespace umwfl
