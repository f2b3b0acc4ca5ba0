#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "hmmqp/errors.hpp"

namespace hmmqp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Tolerance for "columns sum to one" checks on stochastic matrices.
inline constexpr double kStochasticTol = 1e-12;

/// Column-stochastic transition matrix: entry (i, j) is the probability of
/// moving to state i given the chain is in state j.
class TransitionMatrix {
public:
  /// Trivial one-state chain; placeholder for report containers.
  TransitionMatrix() : entries_(MatrixXd::Ones(1, 1)) {}
  explicit TransitionMatrix(MatrixXd entries);

  int size() const { return static_cast<int>(entries_.rows()); }
  const MatrixXd& matrix() const { return entries_; }
  double operator()(int i, int j) const { return entries_(i, j); }

private:
  MatrixXd entries_;
};

/// Column-stochastic emission matrix over a finite alphabet of m >= n symbols;
/// entry (k, i) is the probability of emitting symbol k from state i.
class DiscreteOutputModel {
public:
  explicit DiscreteOutputModel(MatrixXd emission);

  int alphabet_size() const { return static_cast<int>(emission_.rows()); }
  int states() const { return static_cast<int>(emission_.cols()); }
  const MatrixXd& emission() const { return emission_; }

private:
  MatrixXd emission_;
};

/// Univariate Gaussian output per state. Parameter pairs must be pairwise
/// distinct, otherwise single-observation statistics cannot separate states.
class GaussianOutputModel {
public:
  GaussianOutputModel(VectorXd mu, VectorXd sigma2);

  int states() const { return static_cast<int>(mu_.size()); }
  const VectorXd& mu() const { return mu_; }
  const VectorXd& sigma2() const { return sigma2_; }

  double density(int k, double y) const;
  /// phi(y): densities of y under every component.
  VectorXd density_vector(double y) const;
  /// max_k sup_y f_k(y) = max_k 1/sqrt(2 pi sigma2_k).
  double density_bound() const;

private:
  VectorXd mu_;
  VectorXd sigma2_;
};

using OutputModel = std::variant<DiscreteOutputModel, GaussianOutputModel>;

int output_states(const OutputModel& outputs);
bool is_discrete(const OutputModel& outputs);

struct HMMSpec {
  HMMSpec(TransitionMatrix transition, OutputModel output_model,
          std::optional<VectorXd> initial_distribution = std::nullopt);

  TransitionMatrix A;
  OutputModel outputs;
  std::optional<VectorXd> initial;

  int states() const { return A.size(); }
  bool discrete() const { return is_discrete(outputs); }
  const DiscreteOutputModel& discrete_outputs() const { return std::get<DiscreteOutputModel>(outputs); }
  const GaussianOutputModel& gaussian_outputs() const { return std::get<GaussianOutputModel>(outputs); }
};

struct ErgodicityDiagnostics {
  VectorXd pi;
  double second_eigenvalue_modulus = 0.0;
  double min_pi = 0.0;                      // a0
  std::optional<double> min_rho;            // a1 (discrete outputs only)
  std::optional<double> density_bound;      // L  (Gaussian outputs only)
};

/// Stationary vector of A, computed by least squares on the augmented system
/// [A - I; 1^T] pi = [0; 1]. Throws NonUniqueStationary when the second
/// largest eigenvalue modulus exceeds 1 - 1e-10.
VectorXd stationary_distribution(const TransitionMatrix& A);

/// Modulus of the second-largest eigenvalue of A (mixing proxy).
double second_eigenvalue_modulus(const TransitionMatrix& A);

struct SampledSequence {
  std::vector<int> states;
  std::vector<int> symbols;    // filled for discrete outputs
  std::vector<double> values;  // filled for Gaussian outputs
  bool discrete = false;
};

/// Draws a hidden path and observation sequence of length T. When the spec
/// has no initial distribution, X_0 is drawn from the stationary distribution.
SampledSequence sample(const HMMSpec& spec, long long T, std::uint64_t seed);

ErgodicityDiagnostics ergodicity_diagnostics(const HMMSpec& spec);

/// Checks entries in [0,1] (within tol slack) and total mass 1 within tol.
bool is_probability_vector(const VectorXd& v, double tol = kStochasticTol);

}  // namespace hmmqp
