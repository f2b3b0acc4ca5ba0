#include "hmmqp/model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "hmmqp/rng.hpp"

namespace hmmqp {

namespace {

void check_column_stochastic(const MatrixXd& m, const char* what) {
  if (m.rows() == 0 || m.cols() == 0) throw InvalidModel(std::string(what) + ": empty matrix");
  if ((m.array() < -kStochasticTol).any() || (m.array() > 1.0 + kStochasticTol).any()) {
    throw InvalidModel(std::string(what) + ": entries outside [0, 1]");
  }
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (std::abs(m.col(j).sum() - 1.0) > kStochasticTol * static_cast<double>(m.rows())) {
      throw InvalidModel(std::string(what) + ": column " + std::to_string(j) + " does not sum to 1");
    }
  }
}

}  // namespace

TransitionMatrix::TransitionMatrix(MatrixXd entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols()) throw InvalidModel("transition matrix must be square");
  check_column_stochastic(entries_, "transition matrix");
}

DiscreteOutputModel::DiscreteOutputModel(MatrixXd emission) : emission_(std::move(emission)) {
  check_column_stochastic(emission_, "emission matrix");
  if (emission_.rows() < emission_.cols()) {
    throw InvalidModel("emission matrix needs at least as many symbols as states");
  }
}

GaussianOutputModel::GaussianOutputModel(VectorXd mu, VectorXd sigma2)
    : mu_(std::move(mu)), sigma2_(std::move(sigma2)) {
  if (mu_.size() == 0 || mu_.size() != sigma2_.size()) {
    throw InvalidModel("gaussian output model: mu/sigma2 size mismatch");
  }
  if ((sigma2_.array() <= 0.0).any()) throw InvalidModel("gaussian output model: sigma2 must be positive");
  for (int i = 0; i < states(); ++i) {
    for (int j = i + 1; j < states(); ++j) {
      if (mu_[i] == mu_[j] && sigma2_[i] == sigma2_[j]) {
        throw InvalidModel("gaussian output model: components must be pairwise distinct");
      }
    }
  }
}

double GaussianOutputModel::density(int k, double y) const {
  const double d = y - mu_[k];
  return std::exp(-0.5 * d * d / sigma2_[k]) / std::sqrt(2.0 * M_PI * sigma2_[k]);
}

VectorXd GaussianOutputModel::density_vector(double y) const {
  return (-0.5 * (y - mu_.array()).square() / sigma2_.array()).exp() /
         (2.0 * M_PI * sigma2_.array()).sqrt();
}

double GaussianOutputModel::density_bound() const {
  return 1.0 / std::sqrt(2.0 * M_PI * sigma2_.minCoeff());
}

int output_states(const OutputModel& outputs) {
  return std::visit([](const auto& m) { return m.states(); }, outputs);
}

bool is_discrete(const OutputModel& outputs) {
  return std::holds_alternative<DiscreteOutputModel>(outputs);
}

HMMSpec::HMMSpec(TransitionMatrix transition, OutputModel output_model,
                 std::optional<VectorXd> initial_distribution)
    : A(std::move(transition)), outputs(std::move(output_model)), initial(std::move(initial_distribution)) {
  if (output_states(outputs) != A.size()) {
    throw InvalidModel("output model state count does not match transition matrix");
  }
  if (initial) {
    if (initial->size() != A.size()) throw InvalidModel("initial distribution has wrong length");
    if (!is_probability_vector(*initial)) throw InvalidModel("initial distribution is not a probability vector");
  }
}

bool is_probability_vector(const VectorXd& v, double tol) {
  if (v.size() == 0) return false;
  if ((v.array() < -tol).any()) return false;
  return std::abs(v.sum() - 1.0) <= tol * static_cast<double>(v.size());
}

double second_eigenvalue_modulus(const TransitionMatrix& A) {
  Eigen::EigenSolver<MatrixXd> es(A.matrix(), /*computeEigenvectors=*/false);
  std::vector<double> mods(A.size());
  for (int i = 0; i < A.size(); ++i) mods[i] = std::abs(es.eigenvalues()[i]);
  std::sort(mods.begin(), mods.end(), std::greater<>());
  return A.size() > 1 ? mods[1] : 0.0;
}

VectorXd stationary_distribution(const TransitionMatrix& A) {
  const int n = A.size();
  if (n == 1) return VectorXd::Ones(1);
  if (second_eigenvalue_modulus(A) > 1.0 - 1e-10) {
    throw NonUniqueStationary("transition matrix is not mixing: |lambda_2| too close to 1");
  }
  MatrixXd aug(n + 1, n);
  aug.topRows(n) = A.matrix() - MatrixXd::Identity(n, n);
  aug.bottomRows(1).setOnes();
  VectorXd rhs = VectorXd::Zero(n + 1);
  rhs[n] = 1.0;
  VectorXd pi = aug.colPivHouseholderQr().solve(rhs);
  // The system is consistent for a mixing chain; only rounding dust can make
  // entries negative.
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  return pi;
}

SampledSequence sample(const HMMSpec& spec, long long T, std::uint64_t seed) {
  if (T < 1) throw InvalidConfig("sample length must be at least 1");
  const int n = spec.states();
  Rng rng(seed);

  const VectorXd p0 = spec.initial ? *spec.initial : stationary_distribution(spec.A);

  SampledSequence out;
  out.discrete = spec.discrete();
  out.states.resize(static_cast<std::size_t>(T));

  int state = rng.categorical(p0);
  out.states[0] = state;
  for (long long t = 1; t < T; ++t) {
    state = rng.categorical(spec.A.matrix().col(state));
    out.states[static_cast<std::size_t>(t)] = state;
  }
  (void)n;

  if (out.discrete) {
    const auto& B = spec.discrete_outputs().emission();
    out.symbols.resize(static_cast<std::size_t>(T));
    for (long long t = 0; t < T; ++t) {
      out.symbols[static_cast<std::size_t>(t)] = rng.categorical(B.col(out.states[static_cast<std::size_t>(t)]));
    }
  } else {
    const auto& g = spec.gaussian_outputs();
    out.values.resize(static_cast<std::size_t>(T));
    for (long long t = 0; t < T; ++t) {
      const int s = out.states[static_cast<std::size_t>(t)];
      out.values[static_cast<std::size_t>(t)] = g.mu()[s] + std::sqrt(g.sigma2()[s]) * rng.normal();
    }
  }
  return out;
}

ErgodicityDiagnostics ergodicity_diagnostics(const HMMSpec& spec) {
  ErgodicityDiagnostics d;
  d.pi = stationary_distribution(spec.A);
  d.second_eigenvalue_modulus = second_eigenvalue_modulus(spec.A);
  d.min_pi = d.pi.minCoeff();
  if (spec.discrete()) {
    const VectorXd rho = spec.discrete_outputs().emission() * d.pi;
    d.min_rho = rho.minCoeff();
  } else {
    d.density_bound = spec.gaussian_outputs().density_bound();
  }
  return d;
}

}  // namespace hmmqp
