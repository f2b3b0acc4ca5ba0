#include "support/random_specs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "hmmqp/rng.hpp"

namespace hmmqp::testing {

namespace {

MatrixXd dirichlet_columns(int rows, int cols, Rng& rng) {
  MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = -std::log(1.0 - rng.uniform());
    m.col(j) /= m.col(j).sum();
  }
  return m;
}

}  // namespace

TransitionMatrix random_ergodic_transition(int n, std::uint64_t seed, double uniform_blend) {
  Rng rng(seed);
  const MatrixXd raw = dirichlet_columns(n, n, rng);
  const MatrixXd blended =
      (1.0 - uniform_blend) * raw + uniform_blend * MatrixXd::Constant(n, n, 1.0 / n);
  return TransitionMatrix(blended);
}

DiscreteOutputModel random_emission(int m, int n, std::uint64_t seed) {
  Rng rng(seed);
  for (int attempt = 0; attempt < 50; ++attempt) {
    MatrixXd B = 0.85 * dirichlet_columns(m, n, rng) + 0.15 * MatrixXd::Constant(m, n, 1.0 / m);
    Eigen::JacobiSVD<MatrixXd> svd(B);
    const auto& s = svd.singularValues();
    if (s[s.size() - 1] > 0.05 * s[0]) return DiscreteOutputModel(B);
  }
  throw InvalidModel("could not draw a well-conditioned emission matrix");
}

GaussianOutputModel random_gaussian_outputs(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> slots(n);
  std::iota(slots.begin(), slots.end(), 0);
  VectorXd mu(n), s2(n);
  for (int k = 0; k < n; ++k) {
    mu[k] = 4.0 * slots[k] + 1.2 * (rng.uniform() - 0.5);
    s2[k] = 0.5 + 3.5 * rng.uniform();
  }
  return GaussianOutputModel(mu, s2);
}

HMMSpec random_discrete_spec(int n, int m, std::uint64_t seed) {
  return HMMSpec(random_ergodic_transition(n, seed), random_emission(m, n, seed + 77));
}

HMMSpec random_gaussian_spec(int n, std::uint64_t seed) {
  return HMMSpec(random_ergodic_transition(n, seed), random_gaussian_outputs(n, seed + 77));
}

SimplexQP random_simplex_qp(int d, std::uint64_t seed, bool extra_equality) {
  Rng rng(seed);
  MatrixXd G(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) G(i, j) = rng.normal();
  }
  SimplexQP qp;
  qp.M = G.transpose() * G + 1e-3 * MatrixXd::Identity(d, d);
  qp.h = VectorXd::NullaryExpr(d, [&](Eigen::Index) { return rng.normal(); });
  if (extra_equality) {
    qp.E = MatrixXd::Ones(2, d);
    qp.e = VectorXd::Ones(2);
    for (int j = 0; j < d; ++j) qp.E(1, j) = (j % 2 == 0) ? 1.0 : 0.5;
    qp.e[1] = 0.75;
  } else {
    qp.E = MatrixXd::Ones(1, d);
    qp.e = VectorXd::Ones(1);
  }
  return qp;
}

}  // namespace hmmqp::testing
