#include "hmmqp/baseline.hpp"

#include <cmath>

#include "hmmqp/errors.hpp"
#include "hmmqp/rng.hpp"

namespace hmmqp {

namespace {

struct FBStats {
  double loglik = 0.0;
  MatrixXd pair_outer;  // sum_t u_t v_t^T with u = scaled(L_t+1 . beta_t+1), v = alpha_t
  VectorXd gamma0;
};

// Scaled forward-backward. Alphas are stored; the backward pass streams and
// hands each posterior state marginal to `on_gamma` (called once per t, from
// t = T-1 down to 0).
template <class GammaFn>
FBStats forward_backward(const MatrixXd& A, const VectorXd& p0, const MatrixXd& lhood,
                         GammaFn&& on_gamma) {
  const auto T = lhood.rows();
  const int n = static_cast<int>(lhood.cols());

  MatrixXd alpha(T, n);
  VectorXd c(T);
  VectorXd cur = p0.array() * lhood.row(0).transpose().array();
  c[0] = cur.sum();
  if (!(c[0] > 0.0) || !std::isfinite(c[0])) {
    throw NumericalUnderflow("forward recursion underflow at t=0 (bad initialization?)");
  }
  cur /= c[0];
  alpha.row(0) = cur.transpose();
  for (Eigen::Index t = 1; t < T; ++t) {
    cur = lhood.row(t).transpose().array() * (A * cur).array();
    c[t] = cur.sum();
    if (!(c[t] > 0.0) || !std::isfinite(c[t])) {
      throw NumericalUnderflow("forward recursion underflow at t=" + std::to_string(t));
    }
    cur /= c[t];
    alpha.row(t) = cur.transpose();
  }

  FBStats stats;
  stats.loglik = c.array().log().sum();
  stats.pair_outer = MatrixXd::Zero(n, n);

  VectorXd beta = VectorXd::Ones(n);
  VectorXd gamma = alpha.row(T - 1).transpose();
  on_gamma(T - 1, gamma);
  VectorXd u(n);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    u = lhood.row(t + 1).transpose().array() * beta.array() / c[t + 1];
    stats.pair_outer.noalias() += u * alpha.row(t);
    beta = A.transpose() * u;
    gamma = alpha.row(t).transpose().array() * beta.array();
    on_gamma(t, gamma);
  }
  stats.gamma0 = gamma;
  return stats;
}

struct GaussianEmissions {
  VectorXd mu, sigma2;
  double var_floor;

  void fill_lhood(const Eigen::Map<const VectorXd>& y, MatrixXd& lhood) const {
    for (int k = 0; k < mu.size(); ++k) {
      lhood.col(k) = (-0.5 * (y.array() - mu[k]).square() / sigma2[k]).exp() /
                     std::sqrt(2.0 * M_PI * sigma2[k]);
    }
  }
};

struct DiscreteEmissions {
  MatrixXd B;

  void fill_lhood(std::span<const int> y, MatrixXd& lhood) const {
    for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(y.size()); ++t) {
      lhood.row(t) = B.row(y[static_cast<std::size_t>(t)]);
    }
  }
};

void mstep_transition(MatrixXd& A, const MatrixXd& pair_outer) {
  const int n = static_cast<int>(A.rows());
  MatrixXd S = A.cwiseProduct(pair_outer);
  for (int j = 0; j < n; ++j) {
    const double colsum = S.col(j).sum();
    if (colsum > 0.0) A.col(j) = S.col(j) / colsum;
    // a state with no posterior mass keeps its previous column
  }
}

}  // namespace

BaumWelchResult baum_welch(std::span<const double> y, const BaumWelchInit& init, int iterations,
                           const BwIterationCallback& callback) {
  if (!std::holds_alternative<GaussianOutputModel>(init.outputs0)) {
    throw InvalidConfig("continuous data needs Gaussian initial outputs");
  }
  const int n = init.A0.size();
  const auto T = static_cast<Eigen::Index>(y.size());
  if (T < 2) throw SequenceTooShort("baum_welch needs at least two observations");

  const Eigen::Map<const VectorXd> ym(y.data(), T);
  const double ymean = ym.mean();
  const double yvar = (ym.array() - ymean).square().mean();

  const auto& g0 = std::get<GaussianOutputModel>(init.outputs0);
  GaussianEmissions em{g0.mu(), g0.sigma2(), std::max(1e-12 * yvar, 1e-300)};
  MatrixXd A = init.A0.matrix();
  VectorXd p0 = init.p0 ? *init.p0 : VectorXd::Constant(n, 1.0 / n);

  MatrixXd lhood(T, n);
  em.fill_lhood(ym, lhood);

  BaumWelchResult result{init.A0, init.outputs0, p0, {}, 0};
  VectorXd s0(n), s1(n), s2(n);
  for (int iter = 1; iter <= iterations; ++iter) {
    s0.setZero();
    s1.setZero();
    s2.setZero();
    const bool update_outputs = !init.fix_outputs;
    FBStats stats = forward_backward(A, p0, lhood, [&](Eigen::Index t, const VectorXd& gamma) {
      if (update_outputs) {
        const double v = ym[t];
        s0 += gamma;
        s1 += gamma * v;
        s2 += gamma * v * v;
      }
    });
    result.loglik_trace.push_back(stats.loglik);

    mstep_transition(A, stats.pair_outer);
    p0 = stats.gamma0;
    if (update_outputs) {
      for (int k = 0; k < n; ++k) {
        if (s0[k] <= 0.0) continue;
        em.mu[k] = s1[k] / s0[k];
        em.sigma2[k] = std::max(s2[k] / s0[k] - em.mu[k] * em.mu[k], em.var_floor);
      }
      em.fill_lhood(ym, lhood);
    }
    result.iterations = iter;
    if (callback) callback(iter, TransitionMatrix(A), stats.loglik);
  }

  result.A_hat = TransitionMatrix(A);
  result.outputs_hat = GaussianOutputModel(em.mu, em.sigma2);
  result.p0_hat = p0;
  return result;
}

BaumWelchResult baum_welch(std::span<const int> y, const BaumWelchInit& init, int iterations,
                           const BwIterationCallback& callback) {
  if (!std::holds_alternative<DiscreteOutputModel>(init.outputs0)) {
    throw InvalidConfig("discrete data needs discrete initial outputs");
  }
  const int n = init.A0.size();
  const auto T = static_cast<Eigen::Index>(y.size());
  if (T < 2) throw SequenceTooShort("baum_welch needs at least two observations");

  DiscreteEmissions em{std::get<DiscreteOutputModel>(init.outputs0).emission()};
  const int m = static_cast<int>(em.B.rows());
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (y[t] < 0 || y[t] >= m) throw SymbolOutOfRange("symbol outside the emission alphabet");
  }
  MatrixXd A = init.A0.matrix();
  VectorXd p0 = init.p0 ? *init.p0 : VectorXd::Constant(n, 1.0 / n);

  MatrixXd lhood(T, n);
  em.fill_lhood(y, lhood);

  BaumWelchResult result{init.A0, init.outputs0, p0, {}, 0};
  MatrixXd counts(m, n);
  for (int iter = 1; iter <= iterations; ++iter) {
    counts.setZero();
    const bool update_outputs = !init.fix_outputs;
    FBStats stats = forward_backward(A, p0, lhood, [&](Eigen::Index t, const VectorXd& gamma) {
      if (update_outputs) counts.row(y[static_cast<std::size_t>(t)]) += gamma.transpose();
    });
    result.loglik_trace.push_back(stats.loglik);

    mstep_transition(A, stats.pair_outer);
    p0 = stats.gamma0;
    if (update_outputs) {
      for (int j = 0; j < n; ++j) {
        const double colsum = counts.col(j).sum();
        if (colsum > 0.0) em.B.col(j) = counts.col(j) / colsum;
      }
      em.fill_lhood(y, lhood);
    }
    result.iterations = iter;
    if (callback) callback(iter, TransitionMatrix(A), stats.loglik);
  }

  result.A_hat = TransitionMatrix(A);
  result.outputs_hat = DiscreteOutputModel(em.B);
  result.p0_hat = p0;
  return result;
}

TransitionMatrix random_transition_matrix(int n, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd A(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) A(i, j) = -std::log(1.0 - rng.uniform());
    A.col(j) /= A.col(j).sum();
  }
  return TransitionMatrix(A);
}

MatrixXd emission_likelihoods(const GaussianOutputModel& outputs, std::span<const double> y) {
  const Eigen::Map<const VectorXd> ym(y.data(), static_cast<Eigen::Index>(y.size()));
  MatrixXd lhood(ym.size(), outputs.states());
  GaussianEmissions em{outputs.mu(), outputs.sigma2(), 0.0};
  em.fill_lhood(ym, lhood);
  return lhood;
}

MatrixXd emission_likelihoods(const DiscreteOutputModel& outputs, std::span<const int> y) {
  MatrixXd lhood(static_cast<Eigen::Index>(y.size()), outputs.states());
  DiscreteEmissions em{outputs.emission()};
  em.fill_lhood(y, lhood);
  return lhood;
}

MatrixXd posterior_marginals(const TransitionMatrix& A, const VectorXd& p0, const MatrixXd& lhood) {
  MatrixXd gammas(lhood.rows(), lhood.cols());
  forward_backward(A.matrix(), p0, lhood,
                   [&](Eigen::Index t, const VectorXd& gamma) { gammas.row(t) = gamma.transpose(); });
  return gammas;
}

}  // namespace hmmqp
