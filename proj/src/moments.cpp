#include "hmmqp/moments.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <vector>

#include "hmmqp/quadrature.hpp"

namespace hmmqp {

double smallest_singular_value(const MatrixXd& m) {
  Eigen::JacobiSVD<MatrixXd> svd(m);
  return svd.singularValues()[svd.singularValues().size() - 1];
}

void posterior_into(const GaussianOutputModel& outputs, const VectorXd& pi, double y, VectorXd& out) {
  out = pi.array() * outputs.density_vector(y).array();
  out /= std::max(out.sum(), kPiFloor);
}

VectorXd posterior(const GaussianOutputModel& outputs, const VectorXd& pi, double y) {
  VectorXd out(outputs.states());
  posterior_into(outputs, pi, y, out);
  return out;
}

DiscretePairAccumulator::DiscretePairAccumulator(int alphabet_size)
    : singles_(Eigen::Matrix<long long, Eigen::Dynamic, 1>::Zero(alphabet_size)),
      pairs_(Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>::Zero(alphabet_size, alphabet_size)) {}

void DiscretePairAccumulator::add(int symbol) {
  if (symbol < 0 || symbol >= singles_.size()) {
    throw SymbolOutOfRange("symbol " + std::to_string(symbol) + " outside [0, " +
                           std::to_string(singles_.size()) + ")");
  }
  singles_[symbol] += 1;
  if (T_ > 0) {
    pairs_(last_, symbol) += 1;
  } else {
    first_ = symbol;
  }
  last_ = symbol;
  ++T_;
}

void DiscretePairAccumulator::merge(const DiscretePairAccumulator& next) {
  if (next.T_ == 0) return;
  if (T_ == 0) {
    *this = next;
    return;
  }
  singles_ += next.singles_;
  pairs_ += next.pairs_;
  pairs_(last_, next.first_) += 1;  // the boundary pair belongs to `next`
  last_ = next.last_;
  T_ += next.T_;
}

DiscreteMoments DiscretePairAccumulator::finalize() const {
  if (T_ < 2) throw SequenceTooShort("pair statistics need at least two observations");
  DiscreteMoments m;
  m.T = T_;
  m.rho_hat = singles_.cast<double>() / static_cast<double>(T_);
  m.sigma_hat = pairs_.cast<double>() / static_cast<double>(T_ - 1);
  return m;
}

PairStatsAccumulator::PairStatsAccumulator(int dim)
    : single_sum_(VectorXd::Zero(dim)), pair_sum_(MatrixXd::Zero(dim, dim)) {}

void PairStatsAccumulator::add(const VectorXd& feature) {
  single_sum_ += feature;
  if (T_ > 0) {
    pair_sum_.noalias() += last_ * feature.transpose();
  } else {
    first_ = feature;
  }
  last_ = feature;
  ++T_;
}

void PairStatsAccumulator::merge(const PairStatsAccumulator& next) {
  if (next.T_ == 0) return;
  if (T_ == 0) {
    *this = next;
    return;
  }
  single_sum_ += next.single_sum_;
  pair_sum_ += next.pair_sum_;
  pair_sum_.noalias() += last_ * next.first_.transpose();
  last_ = next.last_;
  T_ += next.T_;
}

DiscreteMoments analytic_moments(const TransitionMatrix& A, const DiscreteOutputModel& outputs) {
  if (outputs.states() != A.size()) throw InvalidModel("emission matrix does not match A");
  const VectorXd pi = stationary_distribution(A);
  const MatrixXd& B = outputs.emission();
  DiscreteMoments m;
  m.T = 0;
  m.rho_hat = B * pi;
  m.sigma_hat = B * pi.asDiagonal() * (B * A.matrix()).transpose();
  return m;
}

ContinuousMoments analytic_moments(const TransitionMatrix& A, const GaussianOutputModel& outputs) {
  if (outputs.states() != A.size()) throw InvalidModel("output model does not match A");
  const VectorXd pi = stationary_distribution(A);
  const MatrixXd K = gaussian_kernel_matrix(outputs);
  const MatrixXd F = effective_observation_matrix(outputs, pi);
  ContinuousMoments m;
  m.T = 0;
  m.xi_hat = K * pi;
  m.eta_hat = F * pi.asDiagonal() * (F * A.matrix()).transpose();
  m.eta_prime_hat = K * pi.asDiagonal() * (K * A.matrix()).transpose();
  return m;
}

MatrixXd gaussian_kernel_matrix(const GaussianOutputModel& outputs) {
  const int n = outputs.states();
  const VectorXd& mu = outputs.mu();
  const VectorXd& s2 = outputs.sigma2();
  MatrixXd K(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double v = s2[i] + s2[j];
      const double d = mu[i] - mu[j];
      K(i, j) = K(j, i) = std::exp(-0.5 * d * d / v) / std::sqrt(2.0 * M_PI * v);
    }
  }
  return K;
}

namespace {

struct Interval {
  double lo, hi;
  std::vector<double> splits;
};

Interval integration_interval(const GaussianOutputModel& outputs) {
  Interval iv;
  iv.lo = std::numeric_limits<double>::infinity();
  iv.hi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < outputs.states(); ++i) {
    const double s = std::sqrt(outputs.sigma2()[i]);
    iv.lo = std::min(iv.lo, outputs.mu()[i] - 12.0 * s);
    iv.hi = std::max(iv.hi, outputs.mu()[i] + 12.0 * s);
    iv.splits.push_back(outputs.mu()[i] - s);
    iv.splits.push_back(outputs.mu()[i]);
    iv.splits.push_back(outputs.mu()[i] + s);
  }
  return iv;
}

}  // namespace

MatrixXd kernel_matrix_quadrature(const GaussianOutputModel& outputs, double rel_tol) {
  const int n = outputs.states();
  const Interval iv = integration_interval(outputs);
  QuadratureOptions opt;
  opt.rel_tol = rel_tol;
  MatrixXd K(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double v = integrate_adaptive(
          [&](double y) { return outputs.density(i, y) * outputs.density(j, y); }, iv.lo, iv.hi,
          iv.splits, opt);
      K(i, j) = K(j, i) = v;
    }
  }
  return K;
}

MatrixXd effective_observation_matrix(const GaussianOutputModel& outputs, const VectorXd& pi,
                                      double rel_tol) {
  const int n = outputs.states();
  if (pi.size() != n || pi.minCoeff() < kPiFloor) {
    throw InvalidConfig("effective observation matrix needs strictly positive pi");
  }
  const Interval iv = integration_interval(outputs);
  QuadratureOptions opt;
  opt.rel_tol = rel_tol;
  MatrixXd F(n, n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      F(k, j) = integrate_adaptive(
          [&](double y) {
            const VectorXd f = outputs.density_vector(y);
            const double denom = std::max(pi.dot(f), kPiFloor);
            return pi[k] * f[k] / denom * f[j];
          },
          iv.lo, iv.hi, iv.splits, opt);
    }
  }
  return F;
}

EffectiveMatrices effective_matrices(const GaussianOutputModel& outputs,
                                     const std::optional<VectorXd>& pi) {
  EffectiveMatrices em;
  em.K = gaussian_kernel_matrix(outputs);
  em.sigma1_K = smallest_singular_value(em.K);
  if (pi) {
    em.F = effective_observation_matrix(outputs, *pi);
    em.sigma1_F = smallest_singular_value(*em.F);
  }
  return em;
}

}  // namespace hmmqp
