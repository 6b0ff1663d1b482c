#include "umwfl/fl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "parallel.hpp"
#include "umwfl/errors.hpp"
#include "umwfl/rng.hpp"

namespace umwfl {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

SyntheticTask SyntheticTask::generate(const TaskSpec& spec, int users, std::uint64_t seed) {
  if (spec.dim < 1) throw ConfigError("/task/dim", "must be >= 1");
  if (users < 1) throw ConfigError("/radio/users", "must be >= 1");
  std::vector<std::size_t> sizes = spec.samples_per_user;
  if (sizes.empty()) sizes.assign(users, 100);
  if (sizes.size() != static_cast<std::size_t>(users))
    throw ConfigError("/task/samples_per_user",
                      "expected " + std::to_string(users) + " entries");
  for (std::size_t k = 0; k < sizes.size(); ++k)
    if (sizes[k] == 0)
      throw ConfigError("/task/samples_per_user/" + std::to_string(k), "must be >= 1");
  if (spec.kind == TaskKind::Quadratic && spec.rows_per_sample < 1)
    throw ConfigError("/task/rows_per_sample", "must be >= 1");
  if (!(spec.ridge >= 0.0)) throw ConfigError("/task/ridge", "must be >= 0");

  const int features = spec.dim;
  const int m = features + (features % 2);
  Substream model(seed, "task/model");
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < features; ++i) truth(i) = model.gaussian(1.0);

  std::vector<std::vector<Sample>> data(users);
  for (int k = 0; k < users; ++k) {
    const auto uk = static_cast<std::uint64_t>(k);
    Substream shift_rng(seed, "task/shift", {uk});
    Eigen::VectorXd local = truth;
    for (int i = 0; i < features; ++i)
      local(i) += shift_rng.gaussian(spec.heterogeneity * spec.heterogeneity);
    Substream rng(seed, "task/samples", {uk});
    for (std::size_t d = 0; d < sizes[k]; ++d) {
      Sample s;
      if (spec.kind == TaskKind::Quadratic) {
        const int rows = spec.rows_per_sample;
        s.a = Eigen::MatrixXd::Zero(rows + m, m);
        s.b = Eigen::VectorXd::Zero(rows + m);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < features; ++c) s.a(r, c) = rng.gaussian(1.0);
        s.b.head(rows) = s.a.topRows(rows) * local;
        for (int r = 0; r < rows; ++r)
          s.b(r) += rng.gaussian(spec.label_noise * spec.label_noise);
        s.a.bottomRows(m) = std::sqrt(spec.ridge) * Eigen::MatrixXd::Identity(m, m);
      } else {
        s.a = Eigen::MatrixXd::Zero(1, m);
        for (int c = 0; c < features; ++c) s.a(0, c) = rng.gaussian(1.0);
        const double margin =
            (s.a * local)(0) + rng.gaussian(spec.label_noise * spec.label_noise);
        s.b = Eigen::VectorXd::Constant(1, margin >= 0.0 ? 1.0 : -1.0);
      }
      data[k].push_back(std::move(s));
    }
  }
  return from_samples(spec.kind, std::move(data),
                      spec.kind == TaskKind::Logistic ? spec.ridge : 0.0);
}

SyntheticTask SyntheticTask::from_samples(TaskKind kind,
                                          std::vector<std::vector<Sample>> users,
                                          double l2) {
  if (users.empty() || users.front().empty())
    throw DimensionError("SyntheticTask: need at least one user with data");
  SyntheticTask t;
  t.kind_ = kind;
  t.l2_ = l2;
  t.dim_ = static_cast<int>(users.front().front().a.cols());
  if (t.dim_ % 2 != 0)
    throw DimensionError("SyntheticTask: model dimension must be even");
  for (const auto& user : users) {
    if (user.empty()) throw DimensionError("SyntheticTask: every user needs data");
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(t.dim_, t.dim_);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(t.dim_);
    double c = 0.0;
    for (const auto& s : user) {
      if (s.a.cols() != t.dim_ || s.a.rows() != s.b.size())
        throw DimensionError("SyntheticTask: sample shape mismatch");
      if (kind == TaskKind::Quadratic) {
        h.noalias() += s.a.transpose() * s.a;
        q.noalias() += s.a.transpose() * s.b;
        c += 0.5 * s.b.squaredNorm();
      }
    }
    t.hess_.push_back(std::move(h));
    t.lin_.push_back(std::move(q));
    t.const_.push_back(c);
  }
  t.data_ = std::move(users);
  return t;
}

std::size_t SyntheticTask::total_samples() const {
  std::size_t n = 0;
  for (const auto& u : data_) n += u.size();
  return n;
}

std::vector<std::size_t> SyntheticTask::dataset_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& u : data_) out.push_back(u.size());
  return out;
}

double SyntheticTask::user_loss_sum(int k, const Eigen::VectorXd& x) const {
  if (kind_ == TaskKind::Quadratic)
    return 0.5 * x.dot(hess_[k] * x) - x.dot(lin_[k]) + const_[k];
  double s = 0.0;
  for (const auto& d : data_[k]) s += softplus(-d.b(0) * (d.a * x)(0));
  return s + 0.5 * l2_ * x.squaredNorm() * static_cast<double>(data_[k].size());
}

Eigen::VectorXd SyntheticTask::user_gradient_sum(int k, const Eigen::VectorXd& x) const {
  if (kind_ == TaskKind::Quadratic) return hess_[k] * x - lin_[k];
  Eigen::VectorXd g = l2_ * static_cast<double>(data_[k].size()) * x;
  for (const auto& d : data_[k]) {
    const double y = d.b(0);
    g -= y * sigmoid(-y * (d.a * x)(0)) * d.a.row(0).transpose();
  }
  return g;
}

Eigen::MatrixXd SyntheticTask::user_hessian_sum(int k, const Eigen::VectorXd& x) const {
  if (kind_ == TaskKind::Quadratic) return hess_[k];
  Eigen::MatrixXd h = l2_ * static_cast<double>(data_[k].size()) *
                      Eigen::MatrixXd::Identity(dim_, dim_);
  for (const auto& d : data_[k]) {
    const double p = sigmoid((d.a * x)(0));
    h.noalias() += p * (1.0 - p) * d.a.transpose() * d.a;
  }
  return h;
}

double SyntheticTask::global_loss(const Eigen::VectorXd& x) const {
  double s = 0.0;
  for (int k = 0; k < users(); ++k) s += user_loss_sum(k, x);
  return s / static_cast<double>(total_samples());
}

Eigen::VectorXd SyntheticTask::global_gradient(const Eigen::VectorXd& x) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim_);
  for (int k = 0; k < users(); ++k) g += user_gradient_sum(k, x);
  return g / static_cast<double>(total_samples());
}

Eigen::VectorXd local_gd(const Eigen::VectorXd& x, const SyntheticTask& task, int k,
                         double step, int steps) {
  if (!(step > 0.0)) throw NumericError("local_gd: step size must be positive", step);
  if (x.size() != task.dim()) throw DimensionError("local_gd: wrong model dimension");
  const double scale = step / static_cast<double>(task.samples(k));
  Eigen::VectorXd out = x;
  for (int t = 0; t < steps; ++t) out -= scale * task.user_gradient_sum(k, out);
  return out;
}

CurvatureConstants curvature(const SyntheticTask& task) {
  CurvatureConstants c;
  const double n = static_cast<double>(task.total_samples());
  if (task.kind() == TaskKind::Quadratic) {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(task.dim());
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(task.dim(), task.dim());
    for (int k = 0; k < task.users(); ++k) {
      const Eigen::MatrixXd hk = task.user_hessian_sum(k, zero);
      total += hk;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hk, Eigen::EigenvaluesOnly);
      c.L = std::max(c.L, eig.eigenvalues().maxCoeff());
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(total / n, Eigen::EigenvaluesOnly);
    c.mu = eig.eigenvalues().minCoeff();
  } else {
    c.mu = task.l2();
    for (int k = 0; k < task.users(); ++k) {
      double s = 0.0;
      for (const auto& d : task.data(k)) s += 0.25 * d.a.squaredNorm() + task.l2();
      c.L = std::max(c.L, s);
    }
  }
  if (!(c.mu > 1e-12 * std::max(1.0, c.L)))
    throw NumericError("curvature: task is not strongly convex (mu = " +
                           std::to_string(c.mu) + ")",
                       c.mu);
  return c;
}

Optimum optimum(const SyntheticTask& task) {
  Optimum o;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(task.dim());
  if (task.kind() == TaskKind::Quadratic) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(task.dim(), task.dim());
    for (int k = 0; k < task.users(); ++k) h += task.user_hessian_sum(k, zero);
    const Eigen::VectorXd q = -task.global_gradient(zero) *
                              static_cast<double>(task.total_samples());
    o.theta = h.ldlt().solve(q);
  } else {
    // Damped Newton to a gradient norm of 1e-10.
    Eigen::VectorXd x = zero;
    const double n = static_cast<double>(task.total_samples());
    for (int it = 0; it < 200; ++it) {
      const Eigen::VectorXd g = task.global_gradient(x);
      if (g.norm() <= 1e-10) break;
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(task.dim(), task.dim());
      for (int k = 0; k < task.users(); ++k) h += task.user_hessian_sum(k, x);
      const Eigen::VectorXd dir = -(h / n).ldlt().solve(g);
      double step = 1.0;
      const double f0 = task.global_loss(x);
      while (step > 1e-12 && task.global_loss(x + step * dir) > f0 + 1e-4 * step * g.dot(dir))
        step *= 0.5;
      x += step * dir;
    }
    o.theta = x;
  }
  o.loss = task.global_loss(o.theta);
  return o;
}

double theorem_step_size(const SyntheticTask& task, const CurvatureConstants& c) {
  return static_cast<double>(task.total_samples()) / (task.users() * c.L);
}

BoundWeight bound_weight(int i, int i_prime, int users, double L, double mu,
                         double total_samples) {
  if (i_prime < 0 || i < i_prime)
    throw DimensionError("bound_weight: need i >= i' >= 0");
  const double k = users;
  const double base = 1.0 - mu * total_samples / (k * L);
  BoundWeight w;
  w.regime_ok = base >= 0.0 && base < 1.0;
  w.value = k * L * (3.0 + 2.0 / k) / (2.0 * total_samples) * std::pow(base, i - i_prime);
  return w;
}

double theorem1_bound(const std::vector<double>& max_mse_history,
                      const std::vector<double>& weights) {
  if (weights.size() != max_mse_history.size())
    throw DimensionError("theorem1_bound: history and weights differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * max_mse_history[i];
  return s;
}

double theorem1_bound(const std::vector<double>& max_mse_history, int users, double L,
                      double mu, double total_samples) {
  std::vector<double> w;
  const int i = static_cast<int>(max_mse_history.size()) - 1;
  for (int ip = 0; ip <= i; ++ip)
    w.push_back(bound_weight(i, ip, users, L, mu, total_samples).value);
  return theorem1_bound(max_mse_history, w);
}

const char* to_string(LinkMode m) { return m == LinkMode::Pam ? "pam" : "baseline"; }

LinkPlan plan_links(const ChannelRealization& chan, const AggregationWeights& w,
                    const RadioConfig& radio, const PamConfig& pam, LinkMode mode,
                    std::uint64_t stream) {
  Solution sol = mode == LinkMode::Pam ? run_pam(chan, w, radio, pam, stream)
                                       : run_baseline(chan, w, radio, pam);
  LinkPlan plan;
  plan.phase_shifts = std::move(sol.phase_shifts);
  plan.links = std::move(sol.links);
  plan.objective = sol.objective_trajectory.back();
  return plan;
}

FLState initial_state(const SyntheticTask& task) {
  FLState s;
  s.local.assign(task.users(), Eigen::VectorXd::Zero(task.dim()));
  s.target = Eigen::VectorXd::Zero(task.dim());
  return s;
}

RoundContext make_context(const SyntheticTask& task, const RadioConfig& radio,
                          const LocalTrainConfig& train, std::uint64_t seed) {
  if (radio.users != task.users())
    throw ConfigError("/radio/users", "does not match the number of task datasets");
  if (train.local_steps < 1) throw ConfigError("/train/local_steps", "must be >= 1");
  RoundContext ctx;
  ctx.task = &task;
  ctx.radio = &radio;
  ctx.weights = AggregationWeights::from_sizes(task.dataset_sizes());
  ctx.curvature = curvature(task);
  ctx.step_size = train.step_size ? *train.step_size : theorem_step_size(task, ctx.curvature);
  if (!(ctx.step_size > 0.0)) throw ConfigError("/train/step_size", "must be positive");
  ctx.local_steps = train.local_steps;
  ctx.optimal_loss = optimum(task).loss;
  ctx.seed = seed;
  return ctx;
}

FLState run_round(FLState state, const RoundContext& ctx, const ChannelRealization& chan,
                  const LinkPlan& plan) {
  const SyntheticTask& task = *ctx.task;
  const RadioConfig& radio = *ctx.radio;
  const int users = task.users();
  const auto round = static_cast<std::uint64_t>(state.records.size());
  if (static_cast<int>(state.local.size()) != users)
    throw DimensionError("run_round: state does not match task users");

  std::vector<Eigen::VectorXd> trained;
  trained.reserve(users);
  for (int k = 0; k < users; ++k)
    trained.push_back(local_gd(state.local[k], task, k, ctx.step_size, ctx.local_steps));

  const EncodeState enc = compute_eta(trained);
  const Eigen::VectorXd theta = global_target(trained, ctx.weights);
  const int symbols = task.dim() / 2;

  const MatrixXcd z = sample_awgn(chan.antennas(), symbols, radio.noise_power_server,
                                  ctx.seed, "fl/noise/server", {round, ctx.replay});
  std::vector<VectorXcd> n;
  for (int k = 0; k < users; ++k)
    n.push_back(sample_awgn(symbols, 1, radio.noise_power_user[k], ctx.seed, "fl/noise/user",
                            {round, ctx.replay, static_cast<std::uint64_t>(k)}));
  auto decoded = transmit_round(trained, plan.phase_shifts, plan.links, chan,
                                radio.power_scaling, enc.eta, z, n);

  const auto mse = analytic_mse(plan.phase_shifts, plan.links, chan, ctx.weights, radio,
                                enc.eta, symbols);
  state.max_mse_history.push_back(*std::max_element(mse.begin(), mse.end()));

  RoundRecord rec;
  rec.round = static_cast<int>(round);
  rec.eta = enc.eta;
  rec.objective = plan.objective;
  rec.target_loss = task.global_loss(theta);
  rec.max_mse = state.max_mse_history.back();
  rec.bound = theorem1_bound(state.max_mse_history, users, ctx.curvature.L, ctx.curvature.mu,
                             static_cast<double>(task.total_samples()));
  double sum = 0.0;
  rec.worst_gap = -HUGE_VAL;
  for (const auto& x : decoded) {
    const double gap = task.global_loss(x) - ctx.optimal_loss;
    rec.user_gap.push_back(gap);
    rec.worst_gap = std::max(rec.worst_gap, gap);
    sum += gap;
  }
  rec.loss_gap = sum / users;
  rec.loss = rec.loss_gap + ctx.optimal_loss;

  state.local = std::move(decoded);
  state.target = theta;
  state.records.push_back(std::move(rec));
  return state;
}

namespace {

std::vector<RoundRecord> average(const std::vector<std::vector<RoundRecord>>& replays) {
  std::vector<RoundRecord> out = replays.front();
  const double n = static_cast<double>(replays.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    RoundRecord acc = replays.front()[i];
    for (std::size_t r = 1; r < replays.size(); ++r) {
      const RoundRecord& x = replays[r][i];
      acc.target_loss += x.target_loss;
      acc.loss += x.loss;
      acc.loss_gap += x.loss_gap;
      acc.worst_gap += x.worst_gap;
      acc.max_mse += x.max_mse;
      acc.bound += x.bound;
      acc.eta += x.eta;
      for (std::size_t k = 0; k < acc.user_gap.size(); ++k) acc.user_gap[k] += x.user_gap[k];
    }
    acc.target_loss /= n;
    acc.loss /= n;
    acc.loss_gap /= n;
    acc.worst_gap /= n;
    acc.max_mse /= n;
    acc.bound /= n;
    acc.eta /= n;
    for (auto& g : acc.user_gap) g /= n;
    out[i] = std::move(acc);
  }
  return out;
}

}  // namespace

ExperimentReport run_experiment(const SyntheticTask& task, const RadioConfig& radio,
                                const LocalTrainConfig& train, const PamConfig& pam,
                                const std::vector<std::uint64_t>& seeds,
                                const ExperimentConfigView& opts) {
  radio.validate();
  pam.validate();
  if (opts.rounds < 1) throw ConfigError("/rounds", "must be >= 1");
  if (opts.replays < 1) throw ConfigError("/replays", "must be >= 1");
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  ExperimentReport report;
  for (std::uint64_t seed : sorted) {
    const RoundContext base = make_context(task, radio, train, seed);
    report.optimal_loss = base.optimal_loss;
    report.curvature = base.curvature;
    report.step_size = base.step_size;
    PamConfig seeded = pam;
    seeded.seed = seed;

    std::vector<ChannelRealization> channels;
    for (int i = 0; i < opts.rounds; ++i)
      channels.push_back(sample_channels(radio, seed, static_cast<std::uint64_t>(i)));

    for (LinkMode mode : opts.modes) {
      // Plans depend on channels only, so they are shared by all replays.
      std::vector<LinkPlan> plans(opts.rounds);
      detail::parallel_for(plans.size(), opts.threads, [&](std::size_t i) {
        plans[i] = plan_links(channels[i], base.weights, radio, seeded, mode, i);
      });

      std::vector<std::vector<RoundRecord>> replays(opts.replays);
      detail::parallel_for(opts.replays, opts.threads, [&](std::size_t r) {
        RoundContext ctx = base;
        ctx.replay = r;
        FLState st = initial_state(task);
        for (int i = 0; i < opts.rounds; ++i) st = run_round(std::move(st), ctx, channels[i], plans[i]);
        replays[r] = std::move(st.records);
      });

      Trajectory traj;
      traj.seed = seed;
      traj.mode = mode;
      traj.rounds = average(replays);
      std::vector<int> early;
      const int steady_from = opts.rounds - opts.rounds / 3;
      for (const auto& rec : traj.rounds) {
        const double worst = *std::max_element(rec.user_gap.begin(), rec.user_gap.end());
        if (rec.round < steady_from && worst > rec.bound) early.push_back(rec.round);
      }
      report.early_bound_violations.push_back(std::move(early));
      report.trajectories.push_back(std::move(traj));
    }
  }
  return report;
}

}  // namespace umwfl
