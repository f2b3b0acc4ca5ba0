#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hmmqp/bench.hpp"
#include "hmmqp/moments.hpp"
#include "hmmqp/rng.hpp"
#include "support/checks.hpp"
#include "support/random_specs.hpp"

using namespace hmmqp;
using hmmqp::testing::near;

TEST_CASE("pair counts on a short alternating sequence") {
  const std::vector<int> y = {0, 1, 0, 1};
  const DiscreteMoments m = empirical_rho_sigma(y, 2);
  CHECK(near(m.rho_hat[0], 0.5, 0.0));
  CHECK(near(m.rho_hat[1], 0.5, 0.0));
  // pairs: (0,1), (1,0), (0,1)
  CHECK(near(m.sigma_hat(0, 1), 2.0 / 3.0, 1e-15));
  CHECK(near(m.sigma_hat(1, 0), 1.0 / 3.0, 1e-15));
  CHECK(near(m.sigma_hat(0, 0), 0.0, 0.0));
  CHECK(near(m.sigma_hat(1, 1), 0.0, 0.0));
}

TEST_CASE("degenerate constant sequence") {
  const std::vector<int> y(5, 0);
  const DiscreteMoments m = empirical_rho_sigma(y, 2);
  CHECK(near(m.rho_hat[0], 1.0, 0.0));
  CHECK(near(m.rho_hat[1], 0.0, 0.0));
  CHECK(near(m.sigma_hat(0, 0), 1.0, 0.0));
}

TEST_CASE("empirical moment errors") {
  CHECK_THROWS_AS(empirical_rho_sigma(std::vector<int>{0, 2}, 2), SymbolOutOfRange);
  CHECK_THROWS_AS(empirical_rho_sigma(std::vector<int>{0, -1}, 2), SymbolOutOfRange);
  CHECK_THROWS_AS(empirical_rho_sigma(std::vector<int>{0}, 2), SequenceTooShort);
}

TEST_CASE("moment normalizations hold exactly for any sequence") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    const int m = 2 + static_cast<int>(rng.raw() % 5);
    std::vector<int> y(20 + static_cast<std::size_t>(rng.raw() % 200));
    for (auto& s : y) s = static_cast<int>(rng.raw() % static_cast<std::uint64_t>(m));
    const DiscreteMoments mm = empirical_rho_sigma(y, m);
    CHECK(near(mm.rho_hat.sum(), 1.0, 1e-12));
    CHECK(near(mm.sigma_hat.sum(), 1.0, 1e-12));
    CHECK(mm.rho_hat.minCoeff() >= 0.0);
    CHECK(mm.sigma_hat.minCoeff() >= 0.0);
  }
}

TEST_CASE("chunked accumulation merges to the single-pass counts exactly") {
  Rng rng(99);
  std::vector<int> y(1001);
  for (auto& s : y) s = static_cast<int>(rng.raw() % 4);

  DiscretePairAccumulator whole(4);
  for (int s : y) whole.add(s);

  DiscretePairAccumulator merged(4);
  std::size_t pos = 0;
  while (pos < y.size()) {
    const std::size_t len = std::min<std::size_t>(1 + rng.raw() % 97, y.size() - pos);
    DiscretePairAccumulator chunk(4);
    for (std::size_t i = 0; i < len; ++i) chunk.add(y[pos + i]);
    merged.merge(chunk);
    pos += len;
  }
  const DiscreteMoments a = whole.finalize();
  const DiscreteMoments b = merged.finalize();
  CHECK((a.rho_hat - b.rho_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.sigma_hat - b.sigma_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("continuous chunked accumulation matches the single pass") {
  const HMMSpec spec = builtin_toy_model();
  const auto& g = spec.gaussian_outputs();
  const SampledSequence data = sample(spec, 3000, 17);
  const VectorXd pi = stationary_distribution(spec.A);

  PairStatsAccumulator whole(4);
  VectorXd p(4);
  for (double v : data.values) {
    posterior_into(g, pi, v, p);
    whole.add(p);
  }
  PairStatsAccumulator merged(4);
  Rng rng(3);
  std::size_t pos = 0;
  while (pos < data.values.size()) {
    const std::size_t len = std::min<std::size_t>(1 + rng.raw() % 211, data.values.size() - pos);
    PairStatsAccumulator chunk(4);
    for (std::size_t i = 0; i < len; ++i) {
      posterior_into(g, pi, data.values[pos + i], p);
      chunk.add(p);
    }
    merged.merge(chunk);
    pos += len;
  }
  CHECK((whole.single_sum() - merged.single_sum()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((whole.pair_sum() - merged.pair_sum()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(whole.count() == merged.count());
}

TEST_CASE("analytic pair law marginals equal the symbol law") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const HMMSpec spec = testing::random_discrete_spec(3, 6, seed);
    const DiscreteMoments m = analytic_moments(spec.A, spec.discrete_outputs());
    const VectorXd row_marginal = m.sigma_hat.rowwise().sum();
    const VectorXd col_marginal = m.sigma_hat.colwise().sum().transpose();
    CHECK((row_marginal - m.rho_hat).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((col_marginal - m.rho_hat).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(near(m.sigma_hat.sum(), 1.0, 1e-12));
  }
}

TEST_CASE("analytic symbol law for the hand-solved two-state model") {
  MatrixXd A(2, 2), B(2, 2);
  A << 0.9, 0.2, 0.1, 0.8;
  B << 0.8, 0.3, 0.2, 0.7;
  const DiscreteMoments m = analytic_moments(TransitionMatrix(A), DiscreteOutputModel(B));
  CHECK(near(m.rho_hat[0], 0.8 * 2.0 / 3.0 + 0.3 / 3.0, 1e-12));
  CHECK(near(m.rho_hat[1], 0.2 * 2.0 / 3.0 + 0.7 / 3.0, 1e-12));
}

TEST_CASE("analytic posterior pair law sums to one") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const HMMSpec spec = testing::random_gaussian_spec(3, seed);
    const ContinuousMoments m = analytic_moments(spec.A, spec.gaussian_outputs());
    CHECK(near(m.eta_hat.sum(), 1.0, 1e-10));
    REQUIRE(m.eta_prime_hat.has_value());
    CHECK(m.eta_prime_hat->minCoeff() >= 0.0);
  }
}

TEST_CASE("gaussian kernel closed form: unit-variance self-overlap") {
  VectorXd mu(2), s2(2);
  mu << 1.0, 1.0;
  s2 << 1.0, 2.0;  // distinct pairs; the (0, 0) entry is the unit-variance case
  const GaussianOutputModel g(mu, s2);
  const MatrixXd K = gaussian_kernel_matrix(g);
  CHECK(near(K(0, 0), 1.0 / (2.0 * std::sqrt(M_PI)), 1e-12));
  CHECK(near(K(0, 0), 0.2820948, 1e-7));
}

TEST_CASE("gaussian kernel decays monotonically in the mean gap") {
  double prev = 1.0;
  for (double gap = 1.0; gap <= 30.0; gap += 1.0) {
    VectorXd mu(2), s2(2);
    mu << 0.0, gap;
    s2 << 1.0, 1.0;
    const MatrixXd K = gaussian_kernel_matrix(GaussianOutputModel(mu, s2));
    CHECK(K(0, 1) < prev);
    prev = K(0, 1);
  }
  CHECK(prev < 1e-12);  // far-apart components barely overlap
}

TEST_CASE("gaussian kernel for the toy components, against the direct formula") {
  const HMMSpec spec = builtin_toy_model();
  const MatrixXd K = gaussian_kernel_matrix(spec.gaussian_outputs());
  const double expected = 1.0 / std::sqrt(2.0 * M_PI) / std::sqrt(5.0) * std::exp(-16.0 / 10.0);
  CHECK(near(K(0, 1), expected, 1e-14));
  CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("quadrature kernel validates the closed form") {
  const HMMSpec spec = builtin_toy_model();
  const MatrixXd K = gaussian_kernel_matrix(spec.gaussian_outputs());
  const MatrixXd Kq = kernel_matrix_quadrature(spec.gaussian_outputs());
  CHECK((K - Kq).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("quadrature kernel: single component self-overlap") {
  for (double s2v : {0.25, 1.0, 9.0}) {
    VectorXd mu(1), s2(1);
    mu << 0.7;
    s2 << s2v;
    const MatrixXd Kq = kernel_matrix_quadrature(GaussianOutputModel(mu, s2));
    CHECK(near(Kq(0, 0), 1.0 / (2.0 * std::sqrt(s2v) * std::sqrt(M_PI)), 1e-9));
  }
}

TEST_CASE("quadrature kernel: widely separated components") {
  VectorXd mu(2), s2(2);
  mu << -40.0, 40.0;
  s2 << 1.0, 1.0;
  const MatrixXd Kq = kernel_matrix_quadrature(GaussianOutputModel(mu, s2));
  CHECK(Kq(0, 1) < 1e-12);
}

TEST_CASE("closed form and quadrature agree over a wide parameter range") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    Rng rng(seed);
    const int n = 2 + static_cast<int>(rng.raw() % 3);
    VectorXd mu(n), s2(n);
    for (int k = 0; k < n; ++k) {
      mu[k] = 100.0 * (rng.uniform() - 0.5);  // |mu| <= 50
      s2[k] = 0.1 + 99.9 * rng.uniform();     // sigma2 in [0.1, 100]
    }
    const GaussianOutputModel g(mu, s2);
    CAPTURE(seed);
    CHECK((gaussian_kernel_matrix(g) - kernel_matrix_quadrature(g)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("effective observation matrix: single state") {
  VectorXd mu(1), s2(1), pi(1);
  mu << 2.0;
  s2 << 3.0;
  pi << 1.0;
  const MatrixXd F = effective_observation_matrix(GaussianOutputModel(mu, s2), pi);
  CHECK(near(F(0, 0), 1.0, 1e-9));
}

TEST_CASE("effective observation matrix: mirror symmetry") {
  VectorXd mu(2), s2(2), pi(2);
  mu << -1.5, 1.5;
  s2 << 1.0, 1.0;
  pi << 0.5, 0.5;
  const MatrixXd F = effective_observation_matrix(GaussianOutputModel(mu, s2), pi);
  CHECK(near(F(0, 0), F(1, 1), 1e-9));
  CHECK(near(F(0, 1), F(1, 0), 1e-9));
  CHECK(near(F.col(0).sum(), 1.0, 1e-8));
}

TEST_CASE("effective observation matrix columns sum to one") {
  const HMMSpec spec = builtin_toy_model();
  const VectorXd pi = stationary_distribution(spec.A);
  const MatrixXd F = effective_observation_matrix(spec.gaussian_outputs(), pi);
  for (int j = 0; j < 4; ++j) CHECK(near(F.col(j).sum(), 1.0, 1e-8));
  CHECK(F.minCoeff() >= 0.0);
  CHECK(F.maxCoeff() <= 1.0);

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const HMMSpec rs = testing::random_gaussian_spec(2 + static_cast<int>(seed % 3), seed);
    const VectorXd rpi = stationary_distribution(rs.A);
    const MatrixXd rF = effective_observation_matrix(rs.gaussian_outputs(), rpi);
    for (int j = 0; j < rF.cols(); ++j) CHECK(near(rF.col(j).sum(), 1.0, 1e-8));
  }
}

TEST_CASE("empirical xi: density at the mode for a single draw") {
  VectorXd mu(1), s2(1);
  mu << 1.25;
  s2 << 2.0;
  const std::vector<double> y = {1.25};
  const VectorXd xi = empirical_xi(y, GaussianOutputModel(mu, s2));
  CHECK(near(xi[0], 1.0 / std::sqrt(2.0 * M_PI * 2.0), 1e-15));
  CHECK_THROWS_AS(empirical_xi(std::vector<double>{}, GaussianOutputModel(mu, s2)), SequenceTooShort);
}

TEST_CASE("empirical eta: single state and single pair") {
  VectorXd mu(1), s2(1), pi(1);
  mu << 0.0;
  s2 << 1.0;
  pi << 1.0;
  const GaussianOutputModel g1(mu, s2);
  const MatrixXd eta1 = empirical_eta(std::vector<double>{0.3, -0.2, 1.0}, g1, pi);
  CHECK(near(eta1(0, 0), 1.0, 1e-12));

  const HMMSpec spec = builtin_toy_model();
  const auto& g = spec.gaussian_outputs();
  const VectorXd pit = stationary_distribution(spec.A);
  const std::vector<double> two = {-3.0, 2.5};
  const MatrixXd eta = empirical_eta(two, g, pit);
  const VectorXd p0 = posterior(g, pit, two[0]);
  const VectorXd p1 = posterior(g, pit, two[1]);
  CHECK((eta - p0 * p1.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(near(eta.sum(), 1.0, 1e-10));
  CHECK_THROWS_AS(empirical_eta(std::vector<double>{1.0}, g, pit), SequenceTooShort);
}

TEST_CASE("empirical eta-prime on a constant sequence is the density outer product") {
  const HMMSpec spec = builtin_toy_model();
  const auto& g = spec.gaussian_outputs();
  const double c = 0.8;
  const std::vector<double> y(6, c);
  const MatrixXd ep = empirical_eta_prime(y, g);
  const VectorXd f = g.density_vector(c);
  CHECK((ep - f * f.transpose()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("symbol frequencies converge at the root-T rate") {
  const HMMSpec spec = testing::random_discrete_spec(3, 5, 7);
  const DiscreteMoments exact = analytic_moments(spec.A, spec.discrete_outputs());
  std::vector<double> med_by_T;
  for (long long T : {10000LL, 100000LL, 1000000LL}) {
    std::vector<double> errs;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const SampledSequence data = sample(spec, T, seed);
      const DiscreteMoments m = empirical_rho_sigma(data.symbols, 5);
      errs.push_back((m.rho_hat - exact.rho_hat).norm());
    }
    med_by_T.push_back(median(std::move(errs)));
  }
  for (std::size_t i = 1; i < med_by_T.size(); ++i) {
    const double factor = med_by_T[i - 1] / med_by_T[i];
    CHECK(factor >= 2.5);
    CHECK(factor <= 4.5);
  }
}

TEST_CASE("mean density statistics converge at the root-T rate") {
  const HMMSpec spec = builtin_toy_model();
  const ContinuousMoments exact = analytic_moments(spec.A, spec.gaussian_outputs());
  std::vector<double> lx, ly;
  for (long long T : {1000LL, 10000LL, 100000LL, 1000000LL}) {
    std::vector<double> errs;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const SampledSequence data = sample(spec, T, seed);
      const VectorXd xi = empirical_xi(data.values, spec.gaussian_outputs());
      errs.push_back((xi - exact.xi_hat).norm());
    }
    lx.push_back(std::log(static_cast<double>(T)));
    ly.push_back(std::log(median(std::move(errs))));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(lx.size());
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope > -0.65);
  CHECK(slope < -0.35);
}

TEST_CASE("posterior pair moments at T = 1e5 sit close to the population values") {
  const HMMSpec spec = builtin_toy_model();
  const ContinuousMoments exact = analytic_moments(spec.A, spec.gaussian_outputs());
  const VectorXd pi = stationary_distribution(spec.A);
  std::vector<double> errs;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SampledSequence data = sample(spec, 100000, seed);
    const MatrixXd eta = empirical_eta(data.values, spec.gaussian_outputs(), pi);
    errs.push_back((eta - exact.eta_hat).norm());
  }
  CHECK(median(std::move(errs)) < 0.02);
}

TEST_CASE("density pair moments are harder to estimate than posterior ones") {
  const HMMSpec spec = builtin_toy_model();
  const ContinuousMoments exact = analytic_moments(spec.A, spec.gaussian_outputs());
  const VectorXd pi = stationary_distribution(spec.A);
  std::vector<double> eta_errs, etap_errs;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SampledSequence data = sample(spec, 1000000, seed);
    eta_errs.push_back((empirical_eta(data.values, spec.gaussian_outputs(), pi) - exact.eta_hat).norm());
    etap_errs.push_back(
        (empirical_eta_prime(data.values, spec.gaussian_outputs()) - *exact.eta_prime_hat).norm());
  }
  CHECK(median(std::move(etap_errs)) > median(std::move(eta_errs)));
}

TEST_CASE("moments JSON round trip") {
  const HMMSpec spec = builtin_toy_model();
  const SampledSequence data = sample(spec, 500, 3);
  const VectorXd pi = stationary_distribution(spec.A);
  ContinuousMoments m;
  m.T = 500;
  m.xi_hat = empirical_xi(data.values, spec.gaussian_outputs());
  m.eta_hat = empirical_eta(data.values, spec.gaussian_outputs(), pi);
  m.eta_prime_hat = empirical_eta_prime(data.values, spec.gaussian_outputs());
  const ContinuousMoments back = continuous_moments_from_json(moments_to_json(m));
  CHECK((back.xi_hat - m.xi_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.eta_hat - m.eta_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((*back.eta_prime_hat - *m.eta_prime_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.T == 500);

  const HMMSpec dspec = testing::random_discrete_spec(2, 4, 5);
  const SampledSequence dd = sample(dspec, 300, 4);
  const DiscreteMoments dm = empirical_rho_sigma(dd.symbols, 4);
  const DiscreteMoments dback = discrete_moments_from_json(moments_to_json(dm));
  CHECK((dback.rho_hat - dm.rho_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((dback.sigma_hat - dm.sigma_hat).cwiseAbs().maxCoeff() == 0.0);
}
