#include "umwfl/validation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "umwfl/numeric.hpp"
#include "umwfl/rng.hpp"

namespace umwfl {

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

namespace {

VectorXcd random_vector(Substream& rng, Eigen::Index n, double var = 1.0) {
  VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.complex_gaussian(var);
  return v;
}

MatrixXcd random_phases(Substream& rng, int n) {
  MatrixXcd f(n, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) f(r, c) = std::polar(1.0, 2 * std::numbers::pi * rng.uniform());
  return f;
}

// Unit pathloss and moderate noise keep every quantity of order one.
RadioConfig unit_radio(int antennas, int users) {
  RadioConfig r = RadioConfig::defaults(antennas, users);
  r.pathloss_db.assign(users, 0.0);
  r.noise_power_server = 0.1;
  r.noise_power_user.assign(users, 0.1);
  r.power_budget = 1.0;
  return r;
}

AggregationWeights random_weights(Substream& rng, int users) {
  std::vector<std::size_t> sizes;
  for (int k = 0; k < users; ++k) sizes.push_back(1 + static_cast<std::size_t>(rng.uniform() * 50));
  return AggregationWeights::from_sizes(sizes);
}

struct Instance {
  RadioConfig radio;
  ChannelRealization chan;
  AggregationWeights w;
  MatrixXcd f;
  LinkCoefficients links;
};

Instance random_instance(std::uint64_t seed, const char* label, std::uint64_t index, int n,
                         int k) {
  Substream rng(seed, label, {index});
  Instance in;
  in.radio = unit_radio(n, k);
  in.chan = sample_channels(in.radio, seed ^ Substream::fnv1a(label), index);
  in.w = random_weights(rng, k);
  in.f = random_phases(rng, n);
  for (int j = 0; j < k; ++j)
    in.links.transmit.push_back(std::polar(std::sqrt(rng.uniform()), 2 * std::numbers::pi * rng.uniform()));
  in.links.receive = update_r(in.f, in.links.transmit, in.chan, in.w, in.radio);
  return in;
}

// Max over coordinates of the central difference of `fn` along the real
// and imaginary axis of every entry of `x`.
double fd_gradient_norm(const std::function<double(const VectorXcd&)>& fn, const VectorXcd& x,
                        double h) {
  double sq = 0.0;
  VectorXcd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    for (cd dir : {cd(1, 0), cd(0, 1)}) {
      probe(i) = x(i) + h * dir;
      const double up = fn(probe);
      probe(i) = x(i) - h * dir;
      const double down = fn(probe);
      probe(i) = x(i);
      const double d = (up - down) / (2 * h);
      sq += d * d;
    }
  }
  return std::sqrt(sq);
}

double data_term(const PamWorkspace& ws, int k, const VectorXcd& u) {
  double t = 0.0;
  for (int j = 0; j < ws.users(); ++j) t += std::norm(ws.terms[k][j].dot(u) - ws.alpha[j]);
  const int n = ws.antennas;
  for (int b = 0; b < n; ++b) t += ws.kron_scale[k] * std::norm(ws.downlink[k].dot(u.segment(b * n, n)));
  return t;
}

CheckResult check_structured_solve(std::uint64_t seed, int count) {
  CheckResult res{"structured_vs_dense_solve", true, count, 0.0, 1e-10, ""};
  for (int i = 0; i < count; ++i) {
    Substream rng(seed, "validate/solve", {static_cast<std::uint64_t>(i)});
    const int n = 2 + i % 3, k = 1 + (i / 3) % 3;
    StructuredGram<double> g;
    for (int j = 0; j < k; ++j) g.rank_one_terms.push_back(random_vector(rng, n * n));
    g.kron_scale = rng.uniform();
    g.kron_vector = random_vector(rng, n);
    g.ridge = 0.01 + rng.uniform();
    const VectorXcd rhs = random_vector(rng, n * n);
    const VectorXcd fast = structured_solve(g, rhs);
    const VectorXcd ref = dense_solve(g.materialize(n * n), rhs);
    res.worst = std::max(res.worst, (fast - ref).norm() / ref.norm());
  }
  res.passed = res.worst <= res.limit;
  return res;
}

CheckResult check_r_stationarity(std::uint64_t seed, int count) {
  CheckResult res{"update_r_stationarity", true, count, 0.0, 1e-6, ""};
  for (int i = 0; i < count; ++i) {
    const int n = 2 + i % 3, k = 1 + (i / 3) % 3;
    Instance in = random_instance(seed, "validate/r", static_cast<std::uint64_t>(i), n, k);
    for (int u = 0; u < k; ++u) {
      auto fn = [&](const VectorXcd& r) {
        LinkCoefficients l = in.links;
        l.receive[u] = r(0);
        return mse_bracket(u, in.f, l, in.chan, in.w, in.radio);
      };
      VectorXcd r0(1);
      r0(0) = in.links.receive[u];
      const double value = fn(r0);
      const double h = 1e-5 * std::max(std::abs(r0(0)), 1e-3);
      const double grad = fd_gradient_norm(fn, r0, h);
      res.worst = std::max(res.worst, grad * std::max(std::abs(r0(0)), 1e-3) / (value + 1.0));
    }
  }
  res.passed = res.worst <= res.limit;
  return res;
}

CheckResult check_u_stationarity(std::uint64_t seed, int count) {
  CheckResult res{"update_u_stationarity", true, count, 0.0, 1e-6, ""};
  for (int i = 0; i < count; ++i) {
    const int n = 2 + i % 3, k = 1 + (i / 3) % 3;
    Instance in = random_instance(seed, "validate/u", static_cast<std::uint64_t>(i), n, k);
    const PamWorkspace ws = build_workspace(in.links, in.chan, in.w, in.radio);
    Substream rng(seed, "validate/u/f", {static_cast<std::uint64_t>(i)});
    const VectorXcd f = random_vector(rng, n * n);
    const double rho = std::pow(10.0, 2.0 * rng.uniform() - 1.0);
    const double kappa = rho / k;
    const auto u = update_u(ws, f, rho);
    for (int user = 0; user < k; ++user) {
      auto fn = [&](const VectorXcd& x) {
        return data_term(ws, user, x) + kappa * (x - f).squaredNorm();
      };
      const double value = fn(u[user]);
      const double grad = fd_gradient_norm(fn, u[user], 1e-5);
      res.worst = std::max(res.worst, grad / (value + 1.0));
    }
  }
  res.passed = res.worst <= res.limit;
  return res;
}

CheckResult check_inner_monotone(std::uint64_t seed, int count) {
  CheckResult res{"inner_loop_monotone", true, 0, 0.0, 1e-9, ""};
  for (int i = 0; i < count; ++i) {
    Instance in = random_instance(seed, "validate/inner", static_cast<std::uint64_t>(i), 4, 3);
    const PamWorkspace ws = build_workspace(in.links, in.chan, in.w, in.radio);
    for (double rho : {0.1, 1.0, 10.0}) {
      ++res.instances;
      const auto out = inner_pam(ws, in.f, rho, 50);
      for (std::size_t c = 1; c < out.trajectory.size(); ++c) {
        const double rise = out.trajectory[c] - out.trajectory[c - 1];
        res.worst = std::max(res.worst, rise / std::max(1.0, std::abs(out.trajectory[c - 1])));
      }
    }
  }
  res.passed = res.worst <= res.limit;
  return res;
}

CheckResult check_blocks(const ExperimentConfig& cfg, std::uint64_t seed, int count) {
  CheckResult res{"outer_blocks_non_increasing", true, 0, 0.0, 1e-9, ""};
  const auto w = AggregationWeights::uniform(cfg.radio.users);
  for (int i = 0; i < count; ++i) {
    const auto chan = sample_channels(cfg.radio, seed, static_cast<std::uint64_t>(i));
    PamConfig pam = cfg.pam;
    pam.seed = seed;
    for (const Solution& sol :
         {run_pam(chan, w, cfg.radio, pam, i), run_baseline(chan, w, cfg.radio, pam)}) {
      for (const BlockRecord& b : sol.blocks) {
        ++res.instances;
        res.worst = std::max(res.worst, (b.r_after - b.r_before) / std::max(b.r_before, 1e-300));
        res.worst = std::max(res.worst, (b.t_after - b.t_before) / std::max(b.t_before, 1e-300));
      }
    }
  }
  res.passed = res.worst <= res.limit;
  return res;
}

double grid_minimum(const MatrixXcd& c, const std::vector<double>& alpha, double p0) {
  constexpr int kSteps = 40;
  std::vector<cd> points;
  for (int a = 0; a < kSteps; ++a)
    for (int p = 0; p < kSteps; ++p)
      points.push_back(std::polar(std::sqrt(p0) * a / (kSteps - 1), 2 * std::numbers::pi * p / kSteps));
  const auto k = static_cast<int>(alpha.size());
  double best = HUGE_VAL;
  std::vector<cd> t(k);
  std::function<void(int)> recurse = [&](int j) {
    if (j == k) {
      best = std::min(best, transmit_objective(c, alpha, t));
      return;
    }
    for (const cd& x : points) {
      t[j] = x;
      recurse(j + 1);
    }
  };
  recurse(0);
  return best;
}

CheckResult check_transmit_grid(std::uint64_t seed, int count) {
  CheckResult res{"update_t_vs_grid", true, count, 0.0, 1e-2, ""};
  for (int i = 0; i < count; ++i) {
    Substream rng(seed, "validate/t", {static_cast<std::uint64_t>(i)});
    const int k = 1 + i % 2;
    MatrixXcd c(k, k);
    for (int r = 0; r < k; ++r)
      for (int s = 0; s < k; ++s) c(r, s) = rng.complex_gaussian(1.0);
    const auto w = random_weights(rng, k);
    const auto t = update_t(c, w.alpha, 1.0, std::vector<cd>(k, cd(1.0, 0.0)));
    res.worst = std::max(res.worst, transmit_objective(c, w.alpha, t) - grid_minimum(c, w.alpha, 1.0));
  }
  res.passed = res.worst <= res.limit;
  return res;
}

CheckResult check_mse(std::uint64_t seed, int count, std::size_t draws) {
  CheckResult res{"analytic_vs_monte_carlo_mse", true, count, 0.0, 3.0, ""};
  for (int i = 0; i < count; ++i) {
    const int n = 2 + i % 3, k = 1 + (i / 3) % 3;
    Instance in = random_instance(seed, "validate/mse", static_cast<std::uint64_t>(i), n, k);
    Substream rng(seed, "validate/mse/eta", {static_cast<std::uint64_t>(i)});
    const double eta = 0.5 + rng.uniform();
    const auto analytic = analytic_mse(in.f, in.links, in.chan, in.w, in.radio, eta, 3);
    const auto mc = monte_carlo_mse(in.f, in.links, in.chan, in.w, in.radio, eta, 3, draws,
                                    seed + static_cast<std::uint64_t>(i));
    for (int u = 0; u < k; ++u)
      res.worst = std::max(res.worst, std::abs(mc[u].mean - analytic[u]) / mc[u].std_error);
  }
  res.passed = res.worst <= res.limit;
  return res;
}

CheckResult check_perfect_link(std::uint64_t seed, int rounds) {
  CheckResult res{"noiseless_round_equals_gradient_descent", true, rounds, 0.0, 1e-10, ""};
  TaskSpec spec;
  spec.dim = 6;
  spec.samples_per_user = {20};
  const SyntheticTask task = SyntheticTask::generate(spec, 1, seed);
  RadioConfig radio = unit_radio(4, 1);
  radio.noise_power_server = 0.0;
  radio.noise_power_user = {0.0};
  const RoundContext ctx = make_context(task, radio, LocalTrainConfig{}, seed);
  const auto chan = sample_channels(radio, seed);
  LinkPlan plan;
  plan.phase_shifts = MatrixXcd::Identity(4, 4);
  plan.links.transmit = {cd(1.0, 0.0)};
  plan.links.receive = {1.0 / (std::sqrt(radio.power_scaling) * chan.downlink[0].dot(chan.uplink[0]))};
  FLState st = initial_state(task);
  Eigen::VectorXd ref = Eigen::VectorXd::Zero(task.dim());
  for (int i = 0; i < rounds; ++i) {
    st = run_round(std::move(st), ctx, chan, plan);
    ref -= ctx.step_size * task.global_gradient(ref);
    res.worst = std::max(res.worst,
                         (st.local[0] - ref).lpNorm<Eigen::Infinity>() / std::max(1.0, ref.norm()));
  }
  res.passed = res.worst <= res.limit;
  return res;
}

}  // namespace

ValidationReport run_validation(const ExperimentConfig& cfg, std::uint64_t seed) {
  ValidationReport rep;
  rep.checks.push_back(check_structured_solve(seed, 60));
  rep.checks.push_back(check_r_stationarity(seed, 30));
  rep.checks.push_back(check_u_stationarity(seed, 30));
  rep.checks.push_back(check_inner_monotone(seed, 10));
  rep.checks.push_back(check_blocks(cfg, seed, 3));
  rep.checks.push_back(check_transmit_grid(seed, 6));
  rep.checks.push_back(check_mse(seed, 6, 20000));
  rep.checks.push_back(check_perfect_link(seed, 15));
  return rep;
}

}  // namespace umwfl
