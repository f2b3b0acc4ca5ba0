#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "hmmqp/model.hpp"

namespace hmmqp {

struct EmConfig {
  int max_iters = 500;
  double tol = 1e-8;  // stop when the log-likelihood gain drops below this
  int restarts = 10;
  std::uint64_t seed = 0;
};

struct MixtureFit {
  VectorXd weights;
  GaussianOutputModel components;
  double loglik = 0.0;
  int iterations = 0;
  int restarts_used = 0;  // restarts that finished without degenerating
};

/// EM for a univariate Gaussian mixture with a fixed component count.
/// Restart 0 is seeded from data quantiles, later restarts by k-means++-style
/// sampling; the best log-likelihood wins, ties broken by restart index. A
/// component variance falling to 1e-6 * var(y) aborts the restart; throws
/// DegenerateComponent only when every restart degenerates.
MixtureFit em_fit(std::span<const double> y, int n, const EmConfig& config = {});

/// Permutation p minimizing sum_i |mu_est[p[i]] - mu_true[i]| +
/// |sigma2_est[p[i]] - sigma2_true[i]| by brute force (n <= 10), first
/// minimizer in lexicographic order on ties.
std::vector<int> align_components(const GaussianOutputModel& estimated,
                                  const GaussianOutputModel& truth);

}  // namespace hmmqp
