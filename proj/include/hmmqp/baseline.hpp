#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hmmqp/model.hpp"

namespace hmmqp {

struct BaumWelchInit {
  TransitionMatrix A0;
  OutputModel outputs0;
  /// Keep the output parameters fixed at their initial values and re-estimate
  /// only the transition matrix (and initial distribution).
  bool fix_outputs = false;
  std::optional<VectorXd> p0;  // defaults to uniform
};

struct BaumWelchResult {
  TransitionMatrix A_hat;
  OutputModel outputs_hat;
  VectorXd p0_hat;
  std::vector<double> loglik_trace;  // log-likelihood before each update
  int iterations = 0;
};

/// Called after each update with the refreshed transition matrix and the
/// log-likelihood of the pre-update parameters.
using BwIterationCallback = std::function<void(int iteration, const TransitionMatrix& A, double loglik)>;

/// Scaled forward-backward EM; per-step normalization keeps T up to 1e6+
/// finite, and the scaling constants give the log-likelihood trace directly.
BaumWelchResult baum_welch(std::span<const double> y, const BaumWelchInit& init, int iterations,
                           const BwIterationCallback& callback = {});
BaumWelchResult baum_welch(std::span<const int> y, const BaumWelchInit& init, int iterations,
                           const BwIterationCallback& callback = {});

/// Columns drawn from a flat Dirichlet.
TransitionMatrix random_transition_matrix(int n, std::uint64_t seed);

/// Per-observation emission likelihood matrix (T x n).
MatrixXd emission_likelihoods(const GaussianOutputModel& outputs, std::span<const double> y);
MatrixXd emission_likelihoods(const DiscreteOutputModel& outputs, std::span<const int> y);

/// Smoothed state marginals P(X_t | y) for fixed parameters; each row sums
/// to 1 up to scaling roundoff.
MatrixXd posterior_marginals(const TransitionMatrix& A, const VectorXd& p0, const MatrixXd& lhood);

}  // namespace hmmqp
