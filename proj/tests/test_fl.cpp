#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "umwfl/errors.hpp"
#include "umwfl/fl.hpp"

using namespace umwfl;
using testing::Rng;

namespace {

Sample sample(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) { return Sample{a, b}; }

SyntheticTask unit_quadratic() {
  // Theta(x) = 0.5 ||x - 1||^2 on M = 2.
  return SyntheticTask::from_samples(TaskKind::Quadratic,
                                     {{sample(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Ones(2))}});
}

RadioConfig scalar_radio(double noise) {
  RadioConfig r = testing::unit_radio(1, 1, noise);
  return r;
}

ChannelRealization scalar_link(cd h, cd g) {
  ChannelRealization c;
  c.uplink = {VectorXcd::Constant(1, h)};
  c.downlink = {VectorXcd::Constant(1, g)};
  return c;
}

LinkPlan aligned_plan(const ChannelRealization& ch, double gamma) {
  LinkPlan p;
  p.phase_shifts = MatrixXcd::Identity(1, 1);
  p.links.transmit = {1.0};
  p.links.receive = {1.0 / (std::sqrt(gamma) * std::conj(ch.downlink[0](0)) * ch.uplink[0](0))};
  return p;
}

}  // namespace

TEST_SUITE("fl") {

TEST_CASE("local_gd examples") {
  const SyntheticTask task = unit_quadratic();
  Eigen::VectorXd x(2);
  x << -3, 7;
  CHECK((local_gd(x, task, 0, 1.0, 1) - Eigen::VectorXd::Ones(2)).norm() < 1e-15);
  CHECK(local_gd(Eigen::VectorXd::Ones(2), task, 0, 0.3, 4) == Eigen::VectorXd::Ones(2));
  CHECK_THROWS_AS(local_gd(x, task, 0, 0.0, 1), NumericError);
}

TEST_CASE("gradients match central differences") {
  for (TaskKind kind : {TaskKind::Quadratic, TaskKind::Logistic}) {
    TaskSpec spec;
    spec.kind = kind;
    spec.dim = 6;
    spec.samples_per_user = {15, 25};
    const SyntheticTask task = SyntheticTask::generate(spec, 2, 3);
    Rng rng(4);
    Eigen::VectorXd x(task.dim());
    for (int i = 0; i < x.size(); ++i) x(i) = rng.normal();
    for (int k = 0; k < 2; ++k) {
      const Eigen::VectorXd g = task.user_gradient_sum(k, x);
      Eigen::VectorXd fd(x.size());
      for (int i = 0; i < x.size(); ++i) {
        Eigen::VectorXd p = x, m = x;
        const double h = 1e-5;
        p(i) += h;
        m(i) -= h;
        fd(i) = (task.user_loss_sum(k, p) - task.user_loss_sum(k, m)) / (2 * h);
      }
      CHECK((fd - g).norm() <= 1e-6 * g.norm());
      const Eigen::MatrixXd hess = task.user_hessian_sum(k, x);
      for (int i = 0; i < x.size(); ++i) {
        Eigen::VectorXd p = x, m = x;
        p(i) += 1e-5;
        m(i) -= 1e-5;
        const Eigen::VectorXd col = (task.user_gradient_sum(k, p) - task.user_gradient_sum(k, m)) / 2e-5;
        CHECK((col - hess.col(i)).norm() <= 1e-5 * hess.norm());
      }
    }
  }
}

TEST_CASE("task generation pads odd dimensions and weights sum to one") {
  TaskSpec spec;
  spec.dim = 7;
  const SyntheticTask task = SyntheticTask::generate(spec, 3, 1);
  CHECK(task.dim() == 8);
  CHECK(task.total_samples() == 300);
  const auto w = AggregationWeights::from_sizes(task.dataset_sizes());
  CHECK(w.alpha[0] + w.alpha[1] + w.alpha[2] == doctest::Approx(1.0));
  spec.samples_per_user = {1, 2};
  CHECK_THROWS_AS(SyntheticTask::generate(spec, 3, 1), ConfigError);
}

TEST_CASE("curvature examples") {
  const auto c = curvature(unit_quadratic());
  CHECK(c.mu == doctest::Approx(1.0));
  CHECK(c.L == doctest::Approx(1.0));

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = 1;
  a(1, 1) = 2;
  const SyntheticTask diag = SyntheticTask::from_samples(
      TaskKind::Quadratic, {{sample(a, Eigen::VectorXd::Zero(2))}, {sample(a, Eigen::VectorXd::Zero(2))}});
  const auto d = curvature(diag);
  CHECK(d.mu == doctest::Approx(1.0));
  CHECK(d.L == doctest::Approx(4.0));

  Eigen::MatrixXd flat = Eigen::MatrixXd::Zero(1, 2);
  flat(0, 0) = 1;
  const SyntheticTask degenerate =
      SyntheticTask::from_samples(TaskKind::Quadratic, {{sample(flat, Eigen::VectorXd::Zero(1))}});
  CHECK_THROWS_AS(curvature(degenerate), NumericError);
}

TEST_CASE("curvature agrees with an eigensolver on a random task") {
  TaskSpec spec;
  spec.dim = 6;
  spec.samples_per_user = {10, 30, 20};
  const SyntheticTask task = SyntheticTask::generate(spec, 3, 9);
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(6, 6);
  double l = 0;
  for (int k = 0; k < 3; ++k) {
    Eigen::MatrixXd hk = Eigen::MatrixXd::Zero(6, 6);
    for (const auto& s : task.data(k)) hk += s.a.transpose() * s.a;
    total += hk;
    l = std::max(l, Eigen::EigenSolver<Eigen::MatrixXd>(hk).eigenvalues().real().maxCoeff());
  }
  const double mu = Eigen::EigenSolver<Eigen::MatrixXd>(total / 60.0).eigenvalues().real().minCoeff();
  const auto c = curvature(task);
  CHECK(c.mu == doctest::Approx(mu).epsilon(1e-10));
  CHECK(c.L == doctest::Approx(l).epsilon(1e-10));
  CHECK(c.mu <= c.L);
}

TEST_CASE("optimum is stationary for both task kinds") {
  for (TaskKind kind : {TaskKind::Quadratic, TaskKind::Logistic}) {
    TaskSpec spec;
    spec.kind = kind;
    spec.dim = 4;
    const SyntheticTask task = SyntheticTask::generate(spec, 2, 5);
    const Optimum o = optimum(task);
    CHECK(task.global_gradient(o.theta).norm() <= 1e-9);
    CHECK(o.loss == doctest::Approx(task.global_loss(o.theta)));
  }
}

TEST_CASE("bound_weight examples") {
  const auto a = bound_weight(3, 3, 1, 1.0, 1.0, 1.0);
  CHECK(a.value == doctest::Approx(2.5));
  CHECK(bound_weight(4, 3, 1, 1.0, 1.0, 1.0).value == 0.0);
  const auto b = bound_weight(2, 0, 2, 2.0, 1.0, 2.0);
  CHECK(b.value == doctest::Approx(1.0));
  CHECK(b.regime_ok);
  CHECK_FALSE(bound_weight(1, 0, 1, 1.0, 3.0, 1.0).regime_ok);
  CHECK_THROWS_AS(bound_weight(0, 1, 1, 1.0, 1.0, 1.0), DimensionError);
}

TEST_CASE("theorem1_bound") {
  CHECK(theorem1_bound({0.0, 0.0, 0.0}, 3, 5.0, 1.0, 30.0) == 0.0);
  CHECK(theorem1_bound({1.0}, {2.5}) == 2.5);
  const std::vector<double> hist{0.3, 0.1, 0.7, 0.2};
  const int users = 3;
  const double l = 40, mu = 2, n = 50;
  double ref = 0;
  for (int ip = 0; ip < 4; ++ip)
    ref += users * l * (3 + 2.0 / users) / (2 * n) * std::pow(1 - mu * n / (users * l), 3 - ip) * hist[ip];
  CHECK(theorem1_bound(hist, users, l, mu, n) == doctest::Approx(ref).epsilon(1e-14));
  CHECK_THROWS_AS(theorem1_bound(hist, {1.0}), DimensionError);
}

TEST_CASE("noiseless aligned single-user rounds follow centralized gradient descent") {
  TaskSpec spec;
  spec.dim = 6;
  spec.samples_per_user = {40};
  const SyntheticTask task = SyntheticTask::generate(spec, 1, 2);
  RadioConfig radio = scalar_radio(0.0);
  radio.power_scaling = 2.0;
  const auto ch = scalar_link(cd(0.7, -0.2), cd(0.1, 1.3));
  const LinkPlan plan = aligned_plan(ch, radio.power_scaling);
  const RoundContext ctx = make_context(task, radio, {}, 1);
  FLState st = initial_state(task);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(task.dim());
  for (int i = 0; i < 15; ++i) {
    st = run_round(std::move(st), ctx, ch, plan);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(task.dim());
    for (const auto& s : task.data(0)) grad += s.a.transpose() * (s.a * x - s.b);
    x -= ctx.step_size * grad / static_cast<double>(task.total_samples());
    CHECK((st.local[0] - x).lpNorm<Eigen::Infinity>() <= 1e-10);
  }
  CHECK(st.records.size() == 15);
  CHECK(st.max_mse_history.size() == 15);
}

TEST_CASE("analytic mse of an aligned noiseless link") {
  TaskSpec spec;
  spec.dim = 4;
  spec.samples_per_user = {10};
  const SyntheticTask task = SyntheticTask::generate(spec, 1, 6);
  const auto ch = scalar_link(cd(0.7, -0.2), cd(0.1, 1.3));
  RadioConfig radio = scalar_radio(0.0);
  const RoundContext ctx = make_context(task, radio, {}, 1);
  CHECK(run_round(initial_state(task), ctx, ch, aligned_plan(ch, 1.0)).records[0].max_mse <= 1e-28);

  // With gamma != 1 the closed form scales the bias by gamma where the chain
  // applies sqrt(gamma): the decoded model is exact but the formula is not 0.
  radio.power_scaling = 4.0;
  const RoundContext ctx4 = make_context(task, radio, {}, 1);
  const FLState st = run_round(initial_state(task), ctx4, ch, aligned_plan(ch, 4.0));
  CHECK((st.local[0] - st.target).norm() <= 1e-12);
  const double eta = st.records[0].eta;
  CHECK(st.records[0].max_mse == doctest::Approx(2 * eta * 2 * 4.0 * 0.25));
}

TEST_CASE("pam and baseline agree on a single antenna") {
  const RadioConfig radio = testing::unit_radio(1, 2);
  Rng rng(3);
  const auto ch = testing::random_channel(rng, 1, 2);
  const auto w = AggregationWeights::from_sizes({3, 5});
  PamConfig pam;
  pam.outer_iters = 5;
  pam.init = InitStrategy::AllOnes;
  const auto a = plan_links(ch, w, radio, pam, LinkMode::Pam);
  const auto b = plan_links(ch, w, radio, pam, LinkMode::Baseline);
  CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-6));
}

TEST_CASE("noisy aligned round matches the analytic mse") {
  TaskSpec spec;
  spec.dim = 4;
  spec.samples_per_user = {20};
  const SyntheticTask task = SyntheticTask::generate(spec, 1, 8);
  RadioConfig radio = scalar_radio(0.05);
  const auto ch = scalar_link(cd(1.1, 0.3), cd(-0.4, 0.8));
  const LinkPlan plan = aligned_plan(ch, 1.0);
  RoundContext ctx = make_context(task, radio, {}, 4);
  const int replays = 1000;
  double s = 0, s2 = 0, analytic = 0;
  for (int r = 0; r < replays; ++r) {
    ctx.replay = static_cast<std::uint64_t>(r);
    const FLState st = run_round(initial_state(task), ctx, ch, plan);
    const double e = (st.local[0] - st.target).squaredNorm();
    s += e;
    s2 += e * e;
    analytic = st.records[0].max_mse;
  }
  const double mean = s / replays;
  const double se = std::sqrt((s2 / replays - mean * mean) / (replays - 1));
  CHECK(std::abs(mean - analytic) <= 3 * se);
}

TEST_CASE("run_experiment is deterministic and paired") {
  TaskSpec spec;
  spec.dim = 4;
  spec.samples_per_user = {20, 20};
  const SyntheticTask task = SyntheticTask::generate(spec, 2, 1);
  RadioConfig radio = RadioConfig::defaults(2, 2);
  PamConfig pam;
  pam.outer_iters = 3;
  pam.inner_iters = 10;
  ExperimentConfigView view;
  view.rounds = 4;
  view.replays = 3;
  const auto a = run_experiment(task, radio, {}, pam, {2, 1}, view);
  view.threads = 3;
  const auto b = run_experiment(task, radio, {}, pam, {1, 2}, view);
  REQUIRE(a.trajectories.size() == 4);
  CHECK(a.trajectories[0].seed == 1);
  CHECK(a.trajectories[0].mode == LinkMode::Pam);
  CHECK(a.trajectories[1].mode == LinkMode::Baseline);
  for (std::size_t t = 0; t < a.trajectories.size(); ++t)
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a.trajectories[t].rounds[i].loss == b.trajectories[t].rounds[i].loss);
      CHECK(a.trajectories[t].rounds[i].bound == b.trajectories[t].rounds[i].bound);
    }
}

}
