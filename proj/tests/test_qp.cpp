#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hmmqp/qp.hpp"
#include "hmmqp/rng.hpp"
#include "support/checks.hpp"
#include "support/oracle_qp.hpp"
#include "support/random_specs.hpp"

#include <Eigen/Eigenvalues>

using namespace hmmqp;
using hmmqp::testing::near;

namespace {

SimplexQP simplex_qp(MatrixXd M, VectorXd h) {
  const int d = static_cast<int>(M.rows());
  SimplexQP qp;
  qp.M = std::move(M);
  qp.h = std::move(h);
  qp.E = MatrixXd::Ones(1, d);
  qp.e = VectorXd::Ones(1);
  return qp;
}

}  // namespace

TEST_CASE("projection of a point past a vertex lands on the vertex") {
  VectorXd h(2);
  h << 2.0, 0.0;
  const QPSolution sol = solve(simplex_qp(MatrixXd::Identity(2, 2), h));
  CHECK(near(sol.x[0], 1.0, 1e-12));
  CHECK(near(sol.x[1], 0.0, 1e-12));
  CHECK(sol.kkt_residual <= kKktTol);
}

TEST_CASE("interior target is returned unchanged") {
  VectorXd h(2);
  h << 0.6, 0.4;
  const QPSolution sol = solve(simplex_qp(MatrixXd::Identity(2, 2), h));
  CHECK(near(sol.x[0], 0.6, 1e-12));
  CHECK(near(sol.x[1], 0.4, 1e-12));
  CHECK(sol.active_set.empty());
}

TEST_CASE("random instances match the brute-force oracle") {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const int d = 2 + static_cast<int>(seed % 5);
    const SimplexQP qp = testing::random_simplex_qp(d, seed, seed % 3 == 0);
    const QPSolution sol = solve(qp);
    const VectorXd ref = testing::oracle_solve(qp);
    CAPTURE(seed);
    CHECK((sol.x - ref).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(testing::qp_objective(qp, sol.x) <= testing::qp_objective(qp, ref) + 1e-9);
    CHECK(sol.kkt_residual <= kKktTol);
    CHECK(sol.x.minCoeff() >= -1e-12);
    CHECK((qp.E * sol.x - qp.e).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("solution is equivariant under variable permutation") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const int d = 5;
    const SimplexQP qp = testing::random_simplex_qp(d, seed);
    const QPSolution sol = solve(qp);

    const int perm[5] = {3, 0, 4, 1, 2};  // y = P x reorders variables
    MatrixXd P = MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) P(i, perm[i]) = 1.0;
    SimplexQP qpp;
    qpp.M = P * qp.M * P.transpose();
    qpp.h = P * qp.h;
    qpp.E = qp.E * P.transpose();
    qpp.e = qp.e;
    const QPSolution solp = solve(qpp);
    CHECK((solp.x - P * sol.x).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("duplicated equality rows are dropped, contradictions rejected") {
  VectorXd h(3);
  h << 0.2, 0.5, 0.3;
  SimplexQP qp = simplex_qp(MatrixXd::Identity(3, 3), h);
  SimplexQP dup = qp;
  dup.E = MatrixXd::Ones(2, 3);
  dup.e = VectorXd::Ones(2);
  const QPSolution a = solve(qp);
  const QPSolution b = solve(dup);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() < 1e-12);

  SimplexQP contradiction = qp;
  contradiction.E = MatrixXd::Ones(2, 3);
  contradiction.e = (VectorXd(2) << 1.0, 2.0).finished();
  CHECK_THROWS_AS(solve(contradiction), Infeasible);

  SimplexQP negative_mass = qp;
  negative_mass.e = VectorXd::Constant(1, -1.0);
  CHECK_THROWS_AS(solve(negative_mass), Infeasible);
}

TEST_CASE("normal equations: identity and diagonal") {
  auto x = solve_normal_equations(MatrixXd::Identity(3, 3));
  REQUIRE(x.has_value());
  for (int i = 0; i < 3; ++i) CHECK(near((*x)[i], 1.0 / 3.0, 1e-14));

  MatrixXd W = MatrixXd::Zero(2, 2);
  W(0, 0) = 1.0;
  W(1, 1) = 2.0;
  x = solve_normal_equations(W);
  REQUIRE(x.has_value());
  CHECK(near((*x)[0], 2.0 / 3.0, 1e-14));
  CHECK(near((*x)[1], 1.0 / 3.0, 1e-14));
}

TEST_CASE("normal equations: exact pair-frequency matrix recovers pi") {
  MatrixXd A(2, 2), B(2, 2);
  A << 0.9, 0.2, 0.1, 0.8;
  B << 0.8, 0.3, 0.2, 0.7;
  VectorXd pi(2);
  pi << 2.0 / 3.0, 1.0 / 3.0;
  const VectorXd rho = B * pi;
  const MatrixXd W = B.transpose() * rho.cwiseInverse().asDiagonal() * B;
  const auto x = solve_normal_equations(W);
  REQUIRE(x.has_value());
  CHECK((*x - pi).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("normal equations: nonpositive solutions signal the QP fallback") {
  MatrixXd W(2, 2);
  W << 1.0, 0.0, 3.0, 1.0;  // W^{-1} 1 = (1, -2)
  CHECK(!solve_normal_equations(W).has_value());
}

TEST_CASE("normal equations: singular matrices are rejected") {
  MatrixXd W = MatrixXd::Ones(2, 2);
  CHECK_THROWS_AS(solve_normal_equations(W), SingularMatrix);
}

TEST_CASE("perturbation bound formula") {
  const MatrixXd M = MatrixXd::Identity(2, 2);
  VectorXd h(2), x(2);
  h << 0.6, 0.4;
  x << 0.6, 0.4;
  CHECK(near(perturbation_bound(M, h, M, h, x), 0.0, 0.0));

  VectorXd h2 = h;
  h2[0] += 0.1;
  const double expected = 0.1 / 0.9 * (1.0 + x.norm());
  CHECK(near(perturbation_bound(M, h, M, h2, x), expected, 1e-12));

  VectorXd h3 = h;
  h3[0] += 2.0;  // eps exceeds lambda_min = 1
  CHECK_THROWS_AS(perturbation_bound(M, h, M, h3, x), BoundInapplicable);
}

TEST_CASE("measured deviation never exceeds the stability bound") {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 100; ++seed) {
    const int d = 6;
    SimplexQP qp = testing::random_simplex_qp(d, seed);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(qp.M);
    const double lambda = es.eigenvalues().minCoeff();

    Rng rng(seed * 1337 + 5);
    MatrixXd S(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) S(i, j) = rng.normal();
    }
    S = (0.5 * (S + S.transpose())).eval();
    const double eps_m = rng.uniform() * lambda / 2.5;
    const double eps_h = rng.uniform() * lambda / 2.5;
    Eigen::JacobiSVD<MatrixXd> svd(S);
    SimplexQP qph = qp;
    qph.M = qp.M + eps_m / svd.singularValues()[0] * S;
    VectorXd dh = rng.unit_direction(d);
    qph.h = qp.h + eps_h * dh;

    const QPSolution base = solve(qp);
    const QPSolution pert = solve(qph);
    const double bound = perturbation_bound(qp.M, qp.h, qph.M, qph.h, base.x);
    CAPTURE(seed);
    CHECK((pert.x - base.x).norm() <= bound + 1e-9);
    ++checked;
  }
}
