#pragma once

// Federated training loop over the simulated over-the-air link: synthetic
// strongly convex tasks, local gradient descent, the loss-bound weights and
// paired PAM / fixed-beamforming experiments.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "umwfl/aircomp.hpp"
#include "umwfl/channel.hpp"
#include "umwfl/pam.hpp"

namespace umwfl {

enum class TaskKind { Quadratic, Logistic };

/// One training sample. Quadratic: loss 0.5 ||a x - b||^2 with a of shape
/// rows x M. Logistic: a is 1 x M features, b(0) in {-1, +1}, loss
/// log(1 + exp(-b a x)) + 0.5 l2 ||x||^2.
struct Sample {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

struct TaskSpec {
  TaskKind kind = TaskKind::Quadratic;
  int dim = 10;                              // requested; padded to even
  std::vector<std::size_t> samples_per_user; // empty: 100 per user
  int rows_per_sample = 4;                   // quadratic only
  double ridge = 0.1;                        // quadratic: rows sqrt(ridge) I; logistic: l2
  double label_noise = 0.1;
  double heterogeneity = 0.5;                // per-user shift of the generating model
};

class SyntheticTask {
 public:
  /// Builds a task with `users` datasets. Odd `spec.dim` is padded with one
  /// zero feature so the model packs into complex symbols.
  static SyntheticTask generate(const TaskSpec& spec, int users, std::uint64_t seed);
  static SyntheticTask from_samples(TaskKind kind, std::vector<std::vector<Sample>> users,
                                    double l2 = 0.0);

  TaskKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int users() const { return static_cast<int>(data_.size()); }
  std::size_t samples(int k) const { return data_.at(k).size(); }
  std::size_t total_samples() const;
  std::vector<std::size_t> dataset_sizes() const;
  const std::vector<Sample>& data(int k) const { return data_.at(k); }
  double l2() const { return l2_; }

  /// sum_{d in D_k} Theta(d, x) and its gradient / Hessian.
  double user_loss_sum(int k, const Eigen::VectorXd& x) const;
  Eigen::VectorXd user_gradient_sum(int k, const Eigen::VectorXd& x) const;
  Eigen::MatrixXd user_hessian_sum(int k, const Eigen::VectorXd& x) const;

  /// Lambda(x) = (1 / sum |D_k|) sum_k sum_d Theta(d, x).
  double global_loss(const Eigen::VectorXd& x) const;
  Eigen::VectorXd global_gradient(const Eigen::VectorXd& x) const;

 private:
  TaskKind kind_ = TaskKind::Quadratic;
  int dim_ = 0;
  double l2_ = 0.0;
  std::vector<std::vector<Sample>> data_;
  // Quadratic closed forms: sum a^T a, sum a^T b, sum 0.5 ||b||^2 per user.
  std::vector<Eigen::MatrixXd> hess_;
  std::vector<Eigen::VectorXd> lin_;
  std::vector<double> const_;
};

struct LocalTrainConfig {
  std::optional<double> step_size;  // unset: sum|D_k| / (K L)
  int local_steps = 1;              // E
};

struct CurvatureConstants {
  double mu = 0;  // strong convexity of Lambda
  double L = 0;   // max_k lambda_max(sum_{d in D_k} Hessian)
};

/// E full-batch gradient steps on user k's average loss.
Eigen::VectorXd local_gd(const Eigen::VectorXd& x, const SyntheticTask& task, int k,
                         double step, int steps);

/// Exact for quadratic tasks. Logistic: mu = l2, L = max_k sum_d (||a_d||^2/4 + l2).
/// Throws NumericError when mu <= 0.
CurvatureConstants curvature(const SyntheticTask& task);

/// Minimizer and minimum of Lambda.
struct Optimum {
  Eigen::VectorXd theta;
  double loss = 0;
};
Optimum optimum(const SyntheticTask& task);

/// Step size of the loss bound: sum |D_k| / (K L).
double theorem_step_size(const SyntheticTask& task, const CurvatureConstants& c);

struct BoundWeight {
  double value = 0;
  /// False when the decay base 1 - mu sum|D| / (K L) lies outside [0, 1).
  bool regime_ok = true;
};

/// A^{[i']} = K L (3 + 2/K) / (2 sum|D|) * (1 - mu sum|D| / (K L))^(i - i').
BoundWeight bound_weight(int i, int i_prime, int users, double L, double mu,
                         double total_samples);

/// sum_{i'=0}^{i} A^{[i']} max_k MSE^{[i']} with i = size - 1.
double theorem1_bound(const std::vector<double>& max_mse_history,
                      const std::vector<double>& weights);
double theorem1_bound(const std::vector<double>& max_mse_history, int users, double L,
                      double mu, double total_samples);

enum class LinkMode { Pam, Baseline };
const char* to_string(LinkMode m);

/// Phase shifts and link coefficients used for one round.
struct LinkPlan {
  MatrixXcd phase_shifts;
  LinkCoefficients links;
  double objective = 0;  // objective_minmax of the plan
};

LinkPlan plan_links(const ChannelRealization& chan, const AggregationWeights& w,
                    const RadioConfig& radio, const PamConfig& pam, LinkMode mode,
                    std::uint64_t stream = 0);

struct RoundRecord {
  int round = 0;
  double target_loss = 0;   // Lambda(theta)
  double loss = 0;          // mean_k Lambda(x_k at the start of the next round)
  double loss_gap = 0;      // loss - Lambda*
  double worst_gap = 0;     // max_k Lambda(x_k) - Lambda*
  double max_mse = 0;       // max_k analytic MSE (with 2 eta S)
  double bound = 0;         // loss bound at this round
  double objective = 0;     // min-max design objective of the plan
  double eta = 0;
  std::vector<double> user_gap;  // Lambda(x_k) - Lambda*
};

struct FLState {
  std::vector<Eigen::VectorXd> local;  // x_k at the start of the next round
  Eigen::VectorXd target;              // theta of the last round
  std::vector<RoundRecord> records;
  std::vector<double> max_mse_history;
};

FLState initial_state(const SyntheticTask& task);

/// Everything a round needs besides the state and the channel.
struct RoundContext {
  const SyntheticTask* task = nullptr;
  const RadioConfig* radio = nullptr;
  AggregationWeights weights;
  CurvatureConstants curvature;
  double step_size = 0;
  int local_steps = 1;
  double optimal_loss = 0;
  std::uint64_t seed = 0;
  std::uint64_t replay = 0;
};

RoundContext make_context(const SyntheticTask& task, const RadioConfig& radio,
                          const LocalTrainConfig& train, std::uint64_t seed);

/// One round: local GD, eta, encode / superimpose / forward / receive /
/// decode with the given plan, then bookkeeping. Noise comes from
/// substreams keyed by (seed, round, replay).
FLState run_round(FLState state, const RoundContext& ctx, const ChannelRealization& chan,
                  const LinkPlan& plan);

struct ExperimentConfigView {
  int rounds = 15;
  std::size_t replays = 1;
  std::vector<LinkMode> modes{LinkMode::Pam, LinkMode::Baseline};
  unsigned threads = 1;
};

struct Trajectory {
  std::uint64_t seed = 0;
  LinkMode mode = LinkMode::Pam;
  /// Round records averaged over replays.
  std::vector<RoundRecord> rounds;
};

struct ExperimentReport {
  double optimal_loss = 0;
  CurvatureConstants curvature;
  double step_size = 0;
  std::vector<Trajectory> trajectories;  // sorted by (seed, mode order)
  /// Rounds in the first two thirds where the averaged worst gap exceeded
  /// the bound, per trajectory. Informational only.
  std::vector<std::vector<int>> early_bound_violations;
};

/// Paired runs: for each seed every mode sees the same channels and noise.
ExperimentReport run_experiment(const SyntheticTask& task, const RadioConfig& radio,
                                const LocalTrainConfig& train, const PamConfig& pam,
                                const std::vector<std::uint64_t>& seeds,
                                const ExperimentConfigView& opts);

}  // namespace umwfl
