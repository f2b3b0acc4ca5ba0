#pragma once

#include <Eigen/Dense>
#include <optional>
#include <ranges>
#include <utility>

#include "hmmqp/errors.hpp"
#include "hmmqp/model.hpp"

namespace hmmqp {

/// Clamp for posterior denominators; only observations with vanishing
/// likelihood under every component are affected.
inline constexpr double kPiFloor = 1e-12;

/// Default relative tolerance for the kernel / effective-matrix quadratures.
inline constexpr double kQuadTol = 1e-9;

struct DiscreteMoments {
  VectorXd rho_hat;    // symbol frequencies
  MatrixXd sigma_hat;  // (k, k') = frequency of consecutive pair (k then k')
  long long T = 0;     // sample count; 0 marks exact population values
};

struct ContinuousMoments {
  VectorXd xi_hat;                       // mean component densities
  MatrixXd eta_hat;                      // mean posterior outer products over pairs
  std::optional<MatrixXd> eta_prime_hat; // density analogue of eta
  long long T = 0;
};

struct EffectiveMatrices {
  MatrixXd K;
  std::optional<MatrixXd> F;
  double sigma1_K = 0.0;
  std::optional<double> sigma1_F;
};

double smallest_singular_value(const MatrixXd& m);

/// P(k | y) with the given stationary weights; denominator clamped at
/// kPiFloor so far-tail observations return ~0 instead of 0/0.
void posterior_into(const GaussianOutputModel& outputs, const VectorXd& pi, double y, VectorXd& out);
VectorXd posterior(const GaussianOutputModel& outputs, const VectorXd& pi, double y);

/// Single-pass counts for symbol and consecutive-pair frequencies. Chunks of
/// a sequence may be accumulated separately and merged; a pair straddling a
/// chunk boundary is counted by the chunk owning its second element, and the
/// merged counts equal the single-pass counts exactly.
class DiscretePairAccumulator {
public:
  explicit DiscretePairAccumulator(int alphabet_size);

  void add(int symbol);
  void merge(const DiscretePairAccumulator& next);  // `next` follows this chunk
  long long count() const { return T_; }
  DiscreteMoments finalize() const;  // throws SequenceTooShort when T < 2

private:
  Eigen::Matrix<long long, Eigen::Dynamic, 1> singles_;
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> pairs_;
  int first_ = -1;
  int last_ = -1;
  long long T_ = 0;
};

/// Streaming sums of a per-observation feature vector and of outer products
/// of consecutive features. Same chunk-merge contract as the discrete case.
class PairStatsAccumulator {
public:
  explicit PairStatsAccumulator(int dim);

  void add(const VectorXd& feature);
  void merge(const PairStatsAccumulator& next);
  long long count() const { return T_; }
  const VectorXd& single_sum() const { return single_sum_; }
  const MatrixXd& pair_sum() const { return pair_sum_; }

private:
  VectorXd single_sum_;
  MatrixXd pair_sum_;
  VectorXd first_, last_;
  long long T_ = 0;
};

template <std::ranges::input_range R>
DiscreteMoments empirical_rho_sigma(R&& y, int alphabet_size) {
  DiscretePairAccumulator acc(alphabet_size);
  for (int s : y) acc.add(s);
  return acc.finalize();
}

template <std::ranges::input_range R>
VectorXd empirical_xi(R&& y, const GaussianOutputModel& outputs) {
  PairStatsAccumulator acc(outputs.states());
  VectorXd f(outputs.states());
  for (double v : y) {
    f = outputs.density_vector(v);
    acc.add(f);
  }
  if (acc.count() < 1) throw SequenceTooShort("empirical_xi needs at least one observation");
  return acc.single_sum() / static_cast<double>(acc.count());
}

template <std::ranges::input_range R>
MatrixXd empirical_eta(R&& y, const GaussianOutputModel& outputs, const VectorXd& pi_hat) {
  if (pi_hat.size() != outputs.states() || pi_hat.minCoeff() < kPiFloor) {
    throw InvalidConfig("empirical_eta requires strictly positive stationary weights");
  }
  PairStatsAccumulator acc(outputs.states());
  VectorXd p(outputs.states());
  for (double v : y) {
    posterior_into(outputs, pi_hat, v, p);
    acc.add(p);
  }
  if (acc.count() < 2) throw SequenceTooShort("empirical_eta needs at least two observations");
  return acc.pair_sum() / static_cast<double>(acc.count() - 1);
}

template <std::ranges::input_range R>
MatrixXd empirical_eta_prime(R&& y, const GaussianOutputModel& outputs) {
  PairStatsAccumulator acc(outputs.states());
  VectorXd f(outputs.states());
  for (double v : y) {
    f = outputs.density_vector(v);
    acc.add(f);
  }
  if (acc.count() < 2) throw SequenceTooShort("empirical_eta_prime needs at least two observations");
  return acc.pair_sum() / static_cast<double>(acc.count() - 1);
}

/// Population moments implied by the spec: rho = B pi and the pair law
/// sigma = B diag(pi) (BA)^T. Serves as the exact oracle in tests. T is 0.
DiscreteMoments analytic_moments(const TransitionMatrix& A, const DiscreteOutputModel& outputs);

/// Population xi = K pi, eta = F diag(pi) (FA)^T and the kernel analogue
/// eta' = K diag(pi) (KA)^T, with F computed by quadrature.
ContinuousMoments analytic_moments(const TransitionMatrix& A, const GaussianOutputModel& outputs);

/// Closed-form Gaussian overlap kernel: K_ij = integral of f_i f_j.
MatrixXd gaussian_kernel_matrix(const GaussianOutputModel& outputs);

/// Same kernel by adaptive Simpson over [min(mu - 12 sigma), max(mu + 12 sigma)];
/// validates the closed form and extends to other families.
MatrixXd kernel_matrix_quadrature(const GaussianOutputModel& outputs,
                                  double rel_tol = kQuadTol);

/// Effective observation matrix F_kj = E[P(k | Y) | X = j], column-stochastic.
MatrixXd effective_observation_matrix(const GaussianOutputModel& outputs, const VectorXd& pi,
                                      double rel_tol = kQuadTol);

/// K (closed form) plus, when pi is given, F by quadrature; both with their
/// smallest singular values.
EffectiveMatrices effective_matrices(const GaussianOutputModel& outputs,
                                     const std::optional<VectorXd>& pi = std::nullopt);

}  // namespace hmmqp
