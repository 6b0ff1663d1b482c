#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <vector>

#include "test_support.hpp"
#include "umwfl/errors.hpp"
#include "umwfl/numeric.hpp"

using namespace umwfl;
using testing::Rng;

TEST_SUITE("numeric") {

TEST_CASE("vec stacks columns") {
  MatrixXcd m(2, 2);
  m << 1, 2, 3, 4;
  const VectorXcd v = vec_of_matrix(m);
  CHECK(v(0) == cd(1));
  CHECK(v(1) == cd(3));
  CHECK(v(2) == cd(2));
  CHECK(v(3) == cd(4));
}

TEST_CASE("mat_of_vector inverts vec and rejects bad shapes") {
  Rng rng(1);
  const MatrixXcd m = rng.matrix(3, 3);
  CHECK(mat_of_vector(vec_of_matrix(m), 3, 3) == m);
  CHECK_THROWS_AS(mat_of_vector(VectorXcd::Zero(5), 2, 3), DimensionError);
}

TEST_CASE("vec(A X B^T) = (B kron A) vec(X)") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXcd a = rng.matrix(2, 2), x = rng.matrix(2, 2), b = rng.matrix(2, 2);
    const VectorXcd lhs = vec_of_matrix(MatrixXcd(a * x * b.transpose()));
    const VectorXcd rhs = kron(b, a) * vec_of_matrix(x);
    CHECK((lhs - rhs).norm() <= 1e-12 * lhs.norm());
  }
}

TEST_CASE("kron small cases") {
  CHECK(kron(MatrixXcd::Identity(2, 2), MatrixXcd::Identity(2, 2)) == MatrixXcd::Identity(4, 4));
  MatrixXcd swap(2, 2);
  swap << 0, 1, 1, 0;
  MatrixXcd two(1, 1);
  two << 2;
  MatrixXcd expect(2, 2);
  expect << 0, 2, 2, 0;
  CHECK(kron(swap, two) == expect);
}

TEST_CASE("kron matches elementwise definition") {
  Rng rng(3);
  const MatrixXcd a = rng.matrix(3, 2), b = rng.matrix(2, 3);
  const MatrixXcd k = kron(a, b);
  REQUIRE(k.rows() == 6);
  REQUIRE(k.cols() == 6);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 3; ++q) CHECK(k(i * 2 + p, j * 3 + q) == a(i, j) * b(p, q));
}

TEST_CASE("structured_solve trivial systems") {
  StructuredGram<double> g;
  g.ridge = 2;
  VectorXcd rhs(2);
  rhs << 2, 4;
  const VectorXcd x = structured_solve(g, rhs);
  CHECK(std::abs(x(0) - cd(1)) < 1e-15);
  CHECK(std::abs(x(1) - cd(2)) < 1e-15);

  StructuredGram<double> h;
  h.kron_scale = 1;
  h.kron_vector = VectorXcd::Ones(1);
  h.ridge = 1;
  const VectorXcd y = structured_solve(h, VectorXcd::Constant(1, cd(2)));
  CHECK(std::abs(y(0) - cd(1)) < 1e-15);
}

TEST_CASE("structured_solve agrees with dense solve") {
  Rng rng(4);
  for (int n = 1; n <= 4; ++n) {
    for (int k = 0; k <= 3; ++k) {
      StructuredGram<double> g;
      for (int j = 0; j < k; ++j) g.rank_one_terms.push_back(rng.vector(n * n));
      g.kron_scale = rng.uniform();
      g.kron_vector = rng.vector(n);
      g.ridge = rng.uniform(0.01, 1.0);
      const VectorXcd rhs = rng.vector(n * n);
      const VectorXcd fast = structured_solve(g, rhs);
      const VectorXcd ref = dense_solve(g.materialize(n * n), rhs);
      CHECK((fast - ref).norm() <= 1e-10 * ref.norm());
    }
  }
}

TEST_CASE("structured_solve rejects bad input") {
  StructuredGram<double> g;
  g.ridge = 0;
  CHECK_THROWS_AS(structured_solve(g, VectorXcd::Ones(4)), NumericError);
  g.ridge = 1;
  g.kron_scale = 1;
  g.kron_vector = VectorXcd::Ones(3);
  CHECK_THROWS_AS(structured_solve(g, VectorXcd::Ones(4)), DimensionError);
}

TEST_CASE("ill-conditioned capacitance reports its estimate") {
  StructuredGram<double> g;
  g.ridge = 1e-13;
  g.rank_one_terms.push_back(VectorXcd::Ones(4));
  g.rank_one_terms.push_back(VectorXcd::Ones(4));
  try {
    structured_solve(g, VectorXcd::Ones(4));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.estimate() > kCapacitanceConditionLimit);
  }
}

TEST_CASE("dense_solve small cases and residual") {
  VectorXcd b(3);
  b << 1, 2, 3;
  CHECK(dense_solve(MatrixXcd::Identity(3, 3), b) == b);
  MatrixXcd d = MatrixXcd::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 4;
  VectorXcd rhs(2);
  rhs << 2, 4;
  const VectorXcd x = dense_solve(d, rhs);
  CHECK(std::abs(x(0) - cd(1)) < 1e-15);
  CHECK(std::abs(x(1) - cd(1)) < 1e-15);

  Rng rng(5);
  const MatrixXcd m = rng.matrix(8, 8) + 4.0 * MatrixXcd::Identity(8, 8);
  const VectorXcd r = rng.vector(8);
  CHECK((m * dense_solve(m, r) - r).norm() <= 1e-10 * r.norm());
  CHECK_THROWS_AS(dense_solve(MatrixXcd::Zero(2, 2), rhs), NumericError);
}

TEST_CASE("phase_project examples") {
  VectorXcd v(2);
  v << cd(3, 4), cd(0, 0);
  const VectorXcd p = phase_project(v);
  CHECK(std::abs(p(0) - cd(0.6, 0.8)) < 1e-15);
  CHECK(p(1) == cd(1, 0));
}

TEST_CASE("phase_project is the closest unit-modulus point") {
  Rng rng(6);
  const VectorXcd v = rng.vector(10);
  const VectorXcd p = phase_project(v);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    CHECK(std::abs(std::abs(p(i)) - 1.0) <= 1e-15);
    double best = HUGE_VAL;
    for (int s = 0; s < 1000; ++s)
      best = std::min(best, std::norm(std::polar(1.0, 2 * std::numbers::pi * s / 1000) - v(i)));
    CHECK(std::norm(p(i) - v(i)) <= best + 1e-12);
  }
  CHECK((phase_project(p) - p).norm() <= 1e-15);
}

TEST_CASE("structured_solve time grows about quadratically in N") {
  Rng rng(7);
  std::vector<double> logn, logt;
  for (int n : {8, 16, 32, 64}) {
    StructuredGram<double> g;
    for (int j = 0; j < 3; ++j) g.rank_one_terms.push_back(rng.vector(n * n));
    g.kron_scale = 0.5;
    g.kron_vector = rng.vector(n);
    g.ridge = 0.3;
    const StructuredGramFactor<double> fac(g, n * n);
    const VectorXcd rhs = rng.vector(n * n);
    const int reps = std::max(20, 200000 / (n * n));
    double best = HUGE_VAL;
    for (int trial = 0; trial < 5; ++trial) {
      const auto t0 = std::chrono::steady_clock::now();
      VectorXcd acc = VectorXcd::Zero(n * n);
      for (int r = 0; r < reps; ++r) acc += fac.solve(rhs);
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      CHECK(acc.allFinite());
      best = std::min(best, dt / reps);
    }
    logn.push_back(std::log(n));
    logt.push_back(std::log(best));
  }
  const double mx = (logn[0] + logn[1] + logn[2] + logn[3]) / 4;
  const double my = (logt[0] + logt[1] + logt[2] + logt[3]) / 4;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (logn[i] - mx) * (logt[i] - my);
    sxx += (logn[i] - mx) * (logn[i] - mx);
  }
  const double slope = sxy / sxx;
  MESSAGE("log-log slope " << slope);
  CHECK(slope >= 1.0);
  CHECK(slope <= 4.0);
}

}
