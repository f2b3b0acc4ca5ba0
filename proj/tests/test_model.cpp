#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "hmmqp/bench.hpp"
#include "hmmqp/io.hpp"
#include "hmmqp/model.hpp"
#include "support/checks.hpp"
#include "support/random_specs.hpp"

using namespace hmmqp;

namespace {

MatrixXd mat2(double a00, double a01, double a10, double a11) {
  MatrixXd m(2, 2);
  m << a00, a01, a10, a11;
  return m;
}

}  // namespace

TEST_CASE("stationary distribution of the toy model matches the published values") {
  const HMMSpec spec = builtin_toy_model();
  const VectorXd pi = stationary_distribution(spec.A);
  const double expected[4] = {0.3529, 0.2941, 0.2353, 0.1176};
  for (int i = 0; i < 4; ++i) CHECK(testing::near(pi[i], expected[i], 5e-5));
  CHECK(testing::near(pi.sum(), 1.0, 1e-10));
  CHECK((spec.A.matrix() * pi - pi).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stationary distribution: symmetric two-state chain") {
  const TransitionMatrix A(mat2(0.5, 0.5, 0.5, 0.5));
  const VectorXd pi = stationary_distribution(A);
  CHECK(testing::near(pi[0], 0.5, 1e-12));
  CHECK(testing::near(pi[1], 0.5, 1e-12));
}

TEST_CASE("stationary distribution: hand-solved two-state balance") {
  // 0.1 pi_0 = 0.2 pi_1 with pi_0 + pi_1 = 1 gives (2/3, 1/3).
  const TransitionMatrix A(mat2(0.9, 0.2, 0.1, 0.8));
  const VectorXd pi = stationary_distribution(A);
  CHECK(testing::near(pi[0], 2.0 / 3.0, 1e-12));
  CHECK(testing::near(pi[1], 1.0 / 3.0, 1e-12));
}

TEST_CASE("stationary distribution is equivariant under state relabeling") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const TransitionMatrix A = testing::random_ergodic_transition(4, seed);
    const VectorXd pi = stationary_distribution(A);
    const int perm[4] = {2, 0, 3, 1};
    MatrixXd P = MatrixXd::Zero(4, 4);
    for (int i = 0; i < 4; ++i) P(perm[i], i) = 1.0;
    const TransitionMatrix Ap(P * A.matrix() * P.transpose());
    const VectorXd pip = stationary_distribution(Ap);
    CHECK((pip - P * pi).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("non-mixing chains are rejected") {
  CHECK_THROWS_AS(stationary_distribution(TransitionMatrix(MatrixXd::Identity(2, 2))),
                  NonUniqueStationary);
  // periodic chain: |lambda_2| = 1
  CHECK_THROWS_AS(stationary_distribution(TransitionMatrix(mat2(0.0, 1.0, 1.0, 0.0))),
                  NonUniqueStationary);
}

TEST_CASE("model construction invariants") {
  CHECK_THROWS_AS(TransitionMatrix(mat2(0.5, 0.5, 0.4, 0.5)), InvalidModel);
  CHECK_THROWS_AS(TransitionMatrix(mat2(1.2, 0.5, -0.2, 0.5)), InvalidModel);
  MatrixXd wide(2, 3);
  wide << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  CHECK_THROWS_AS(DiscreteOutputModel{wide}, InvalidModel);  // m < n
  VectorXd mu(2), s2(2);
  mu << 0.0, 0.0;
  s2 << 1.0, 1.0;
  CHECK_THROWS_AS(GaussianOutputModel(VectorXd(mu), VectorXd(s2)), InvalidModel);  // identical pairs
  s2 << 1.0, -1.0;
  mu << 0.0, 1.0;
  CHECK_THROWS_AS(GaussianOutputModel(VectorXd(mu), VectorXd(s2)), InvalidModel);
  // initial distribution must be a probability vector of the right length
  VectorXd bad_init(2);
  bad_init << 0.9, 0.2;
  CHECK_THROWS_AS(HMMSpec(TransitionMatrix(mat2(0.9, 0.2, 0.1, 0.8)),
                          GaussianOutputModel((VectorXd(2) << 0, 3).finished(),
                                              (VectorXd(2) << 1, 1).finished()),
                          bad_init),
                  InvalidModel);
}

TEST_CASE("sampling: deterministic alternation") {
  VectorXd init(2);
  init << 1.0, 0.0;
  const HMMSpec spec(TransitionMatrix(mat2(0.0, 1.0, 1.0, 0.0)),
                     GaussianOutputModel((VectorXd(2) << -1, 1).finished(),
                                         (VectorXd(2) << 1, 1).finished()),
                     init);
  const SampledSequence seq = sample(spec, 4, 7);
  const int expected[4] = {0, 1, 0, 1};
  for (int t = 0; t < 4; ++t) CHECK(seq.states[t] == expected[t]);
}

TEST_CASE("sampling: identical seeds give identical sequences") {
  const HMMSpec spec = builtin_toy_model();
  const SampledSequence a = sample(spec, 500, 42);
  const SampledSequence b = sample(spec, 500, 42);
  CHECK(a.states == b.states);
  CHECK(a.values == b.values);
  const SampledSequence c = sample(spec, 500, 43);
  CHECK(a.values != c.values);
}

TEST_CASE("sampling: state frequencies approach the stationary distribution") {
  const HMMSpec spec = builtin_toy_model();
  const VectorXd pi = stationary_distribution(spec.A);
  const SampledSequence seq = sample(spec, 100000, 11);
  VectorXd freq = VectorXd::Zero(4);
  for (int s : seq.states) freq[s] += 1.0;
  freq /= 100000.0;
  CHECK((freq - pi).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("sampling: empirical transition counts converge to A") {
  const HMMSpec spec = builtin_toy_model();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SampledSequence seq = sample(spec, 1000000, seed);
    MatrixXd counts = MatrixXd::Zero(4, 4);
    for (std::size_t t = 1; t < seq.states.size(); ++t) counts(seq.states[t], seq.states[t - 1]) += 1.0;
    for (int j = 0; j < 4; ++j) counts.col(j) /= std::max(counts.col(j).sum(), 1.0);
    CHECK((counts - spec.A.matrix()).cwiseAbs().maxCoeff() < 5e-3);
  }
}

TEST_CASE("sampling from pi keeps the marginal stationary (chi-square)") {
  const HMMSpec base = builtin_toy_model();
  const VectorXd pi = stationary_distribution(base.A);
  const HMMSpec spec(base.A, base.outputs, pi);
  const long long T = 100000;
  const SampledSequence seq = sample(spec, T, 5);
  VectorXd counts = VectorXd::Zero(4);
  for (int s : seq.states) counts[s] += 1.0;
  double chi2 = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double expected = pi[i] * static_cast<double>(T);
    chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  }
  CHECK(chi2 < 16.266);  // chi-square critical value, 3 dof, significance 1e-3
}

TEST_CASE("ergodicity diagnostics") {
  const HMMSpec spec = builtin_toy_model();
  const ErgodicityDiagnostics d = ergodicity_diagnostics(spec);
  CHECK(testing::near(d.min_pi, 0.1176, 5e-5));
  CHECK(d.density_bound.has_value());
  CHECK(!d.min_rho.has_value());
  CHECK(testing::near(*d.density_bound, 1.0 / std::sqrt(2.0 * M_PI * 1.0), 1e-12));

  VectorXd mu(2), s2(2);
  mu << -1.0, 1.0;
  s2 << 1.0, 1.0;
  const HMMSpec flat(TransitionMatrix(mat2(0.5, 0.5, 0.5, 0.5)), GaussianOutputModel(mu, s2));
  const ErgodicityDiagnostics df = ergodicity_diagnostics(flat);
  CHECK(testing::near(df.second_eigenvalue_modulus, 0.0, 1e-12));
  CHECK(testing::near(*df.density_bound, 0.3989422804014327, 1e-12));

  const HMMSpec disc(TransitionMatrix(mat2(0.9, 0.2, 0.1, 0.8)),
                     testing::random_emission(3, 2, 5));
  const ErgodicityDiagnostics dd = ergodicity_diagnostics(disc);
  CHECK(dd.min_rho.has_value());
  const VectorXd rho = disc.discrete_outputs().emission() * stationary_distribution(disc.A);
  CHECK(testing::near(*dd.min_rho, rho.minCoeff(), 1e-12));
}

TEST_CASE("model file round trip") {
  const HMMSpec spec = builtin_toy_model();
  const auto path = std::filesystem::temp_directory_path() / "hmmqp_model_rt.json";
  save_model(path.string(), spec);
  const HMMSpec back = load_model(path.string());
  CHECK((back.A.matrix() - spec.A.matrix()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.gaussian_outputs().mu() - spec.gaussian_outputs().mu()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.gaussian_outputs().sigma2() - spec.gaussian_outputs().sigma2()).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);

  const HMMSpec dspec = testing::random_discrete_spec(3, 5, 9);
  save_model(path.string(), dspec);
  const HMMSpec dback = load_model(path.string());
  CHECK((dback.discrete_outputs().emission() - dspec.discrete_outputs().emission()).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("sequence file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "hmmqp_seq_rt.txt";
  const HMMSpec spec = builtin_toy_model();
  const SampledSequence seq = sample(spec, 64, 3);
  save_sequence(path.string(), seq);
  const LoadedSequence back = load_sequence(path.string());
  CHECK(!back.discrete);
  REQUIRE(back.values.size() == seq.values.size());
  for (std::size_t t = 0; t < seq.values.size(); ++t) CHECK(back.values[t] == seq.values[t]);
  std::filesystem::remove(path);

  const HMMSpec dspec = testing::random_discrete_spec(2, 4, 21);
  const SampledSequence dseq = sample(dspec, 64, 3);
  save_sequence(path.string(), dseq);
  const LoadedSequence dback = load_sequence(path.string());
  CHECK(dback.discrete);
  CHECK(dback.symbols == dseq.symbols);
  std::filesystem::remove(path);
}
