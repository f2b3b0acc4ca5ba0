#include "hmmqp/estimators.hpp"

#include <chrono>
#include <cmath>

#include "hmmqp/rng.hpp"

namespace hmmqp {

namespace {

constexpr double kRankTolFactor = 1e-8;  // sigma_min > 1e-8 * sigma_max required

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_full_rank(const MatrixXd& G, const char* name) {
  Eigen::JacobiSVD<MatrixXd> svd(G);
  const auto& s = svd.singularValues();
  if (s[s.size() - 1] <= kRankTolFactor * s[0]) {
    throw RankDeficient(std::string(name) + " does not have full column rank");
  }
}

/// sigma_1 of diag(sqrt(w)) G, where w holds the inverse observed frequencies.
double sigma1_row_weighted(const MatrixXd& G, const VectorXd& w) {
  return smallest_singular_value(w.cwiseSqrt().asDiagonal() * G);
}

VectorXd inverse_weights(const VectorXd& v) {
  VectorXd w(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) w[i] = v[i] > 0.0 ? 1.0 / v[i] : 0.0;
  return w;
}

AEstimate estimate_A_impl(const MatrixXd& G, const MatrixXd& pair_target, const VectorXd& pi_hat,
                          const AEstimateOptions& options) {
  const int n = static_cast<int>(G.cols());
  const int m = static_cast<int>(G.rows());
  if (pi_hat.size() != n || pi_hat.minCoeff() < kPiFloor) {
    throw InvalidConfig("transition estimation requires strictly positive pi_hat");
  }

  const MatrixXd C = build_C(pi_hat, G);
  Eigen::Map<const VectorXd> target(pair_target.data(), m * m);

  VectorXd w;
  if (options.weighted) {
    w = inverse_weights(target);
  } else {
    w = VectorXd::Ones(m * m);
  }

  const bool stationarity = options.stationarity_on();
  const int p = stationarity ? 2 * n : n;
  MatrixXd E = MatrixXd::Zero(p, n * n);
  VectorXd e(p);
  for (int j = 0; j < n; ++j) {  // column sums
    for (int i = 0; i < n; ++i) E(j, i + n * j) = 1.0;
    e[j] = 1.0;
  }
  if (stationarity) {  // A pi_hat = pi_hat (one row is dependent, dropped by the solver)
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) E(n + i, i + n * j) = pi_hat[j];
      e[n + i] = pi_hat[i];
    }
  }

  SimplexQP qp;
  const MatrixXd Cw = w.asDiagonal() * C;
  qp.M = (C.transpose() * Cw).eval();
  qp.M = (0.5 * (qp.M + qp.M.transpose())).eval();
  qp.h = Cw.transpose() * target;
  qp.E = std::move(E);
  qp.e = std::move(e);
  if (stationarity) {
    // Every column equal to pi_hat satisfies both constraint blocks.
    VectorXd x0(n * n);
    for (int j = 0; j < n; ++j) x0.segment(j * n, n) = pi_hat;
    qp.x0 = std::move(x0);
  } else {
    qp.x0 = VectorXd::Constant(n * n, 1.0 / n);
  }

  QPSolution sol = solve(qp);

  MatrixXd A_hat = Eigen::Map<const MatrixXd>(sol.x.data(), n, n);
  A_hat = A_hat.cwiseMax(0.0);  // clamp negative dust, then restore column sums
  for (int j = 0; j < n; ++j) {
    const double s = A_hat.col(j).sum();
    if (s <= 0.0) throw Infeasible("transition estimate has an empty column");
    A_hat.col(j) /= s;
  }

  AEstimate est{TransitionMatrix(A_hat), options.weighted, stationarity,
                SolverDiagnostics{sol.iterations, sol.kkt_residual}};
  return est;
}

}  // namespace

PiEstimate estimate_pi_discrete(const DiscreteMoments& moments, const DiscreteOutputModel& outputs) {
  const MatrixXd& B = outputs.emission();
  if (B.rows() != moments.rho_hat.size()) throw InvalidConfig("alphabet size mismatch");
  check_full_rank(B, "emission matrix");

  const VectorXd w = inverse_weights(moments.rho_hat);
  PiEstimate est;
  est.sigma1_weighted = sigma1_row_weighted(B, w);

  const MatrixXd W = B.transpose() * w.asDiagonal() * B;
  try {
    if (auto pi = solve_normal_equations(W)) {
      est.pi_hat = *pi;
      est.method = PiMethod::normal_equations;
      return est;
    }
  } catch (const SingularMatrix&) {
    // fall through to the constrained solve
  }

  QPSolution sol = solve(weighted_simplex_least_squares(B, moments.rho_hat, w));
  est.pi_hat = sol.x;
  est.method = PiMethod::weighted_qp;
  est.solver = {sol.iterations, sol.kkt_residual};
  return est;
}

PiEstimate estimate_pi_continuous(const ContinuousMoments& moments, const MatrixXd& K,
                                  bool weighted) {
  if (K.rows() != moments.xi_hat.size()) throw InvalidConfig("kernel size mismatch");
  check_full_rank(K, "kernel matrix");

  const VectorXd w_diag = inverse_weights(moments.xi_hat);
  PiEstimate est;
  est.sigma1_weighted = sigma1_row_weighted(K, w_diag);

  const VectorXd w = weighted ? w_diag : VectorXd::Ones(K.rows());
  QPSolution sol = solve(weighted_simplex_least_squares(K, moments.xi_hat, w));
  est.pi_hat = sol.x;
  est.method = weighted ? PiMethod::weighted_qp : PiMethod::unweighted_qp;
  est.solver = {sol.iterations, sol.kkt_residual};
  return est;
}

MatrixXd build_C(const VectorXd& pi_hat, const MatrixXd& G) {
  const int m = static_cast<int>(G.rows());
  const int n = static_cast<int>(G.cols());
  if (pi_hat.size() != n) throw InvalidConfig("pi size does not match observation operator");
  MatrixXd C(m * m, n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int col = i + n * j;
      for (int kp = 0; kp < m; ++kp) {
        for (int k = 0; k < m; ++k) {
          C(k + m * kp, col) = pi_hat[j] * G(k, j) * G(kp, i);
        }
      }
    }
  }
  return C;
}

AEstimate estimate_A_discrete(const DiscreteMoments& moments, const DiscreteOutputModel& outputs,
                              const VectorXd& pi_hat, const AEstimateOptions& options) {
  check_full_rank(outputs.emission(), "emission matrix");
  return estimate_A_impl(outputs.emission(), moments.sigma_hat, pi_hat, options);
}

AEstimate estimate_A_continuous(const ContinuousMoments& moments, const EffectiveMatrices& effective,
                                const VectorXd& pi_hat, const AEstimateOptions& options) {
  if (options.use_eta_prime) {
    if (!moments.eta_prime_hat) throw InvalidConfig("eta_prime moments were not collected");
    check_full_rank(effective.K, "kernel matrix");
    return estimate_A_impl(effective.K, *moments.eta_prime_hat, pi_hat, options);
  }
  if (!effective.F) throw InvalidConfig("effective observation matrix missing");
  check_full_rank(*effective.F, "effective observation matrix");
  return estimate_A_impl(*effective.F, moments.eta_hat, pi_hat, options);
}

namespace {

VectorXd clamp_positive(VectorXd pi) {
  // Downstream stages need strictly positive weights; zero entries only occur
  // at very small sample sizes.
  for (Eigen::Index i = 0; i < pi.size(); ++i) pi[i] = std::max(pi[i], kPiFloor);
  return pi / pi.sum();
}

}  // namespace

EstimationReport full_pipeline(std::span<const int> y, const DiscreteOutputModel& outputs_hat,
                               const PipelineOptions& options) {
  const auto t_start = Clock::now();
  EstimationReport rep;
  rep.discrete = true;
  rep.T = static_cast<long long>(y.size());

  auto t0 = Clock::now();
  const DiscreteMoments moments = empirical_rho_sigma(y, outputs_hat.alphabet_size());
  rep.timings.moments_ms = ms_since(t0);

  t0 = Clock::now();
  rep.pi = estimate_pi_discrete(moments, outputs_hat);
  rep.timings.pi_ms = ms_since(t0);

  rep.effective.K = outputs_hat.emission();
  rep.effective.sigma1_K = smallest_singular_value(outputs_hat.emission());
  rep.effective.F = inverse_weights(moments.rho_hat).cwiseSqrt().asDiagonal() * outputs_hat.emission();
  rep.effective.sigma1_F = rep.pi.sigma1_weighted;

  t0 = Clock::now();
  AEstimateOptions aopts{options.weighted, options.stationarity, false};
  rep.A = estimate_A_discrete(moments, outputs_hat, clamp_positive(rep.pi.pi_hat), aopts);
  rep.timings.a_ms = ms_since(t0);

  rep.timings.total_ms = ms_since(t_start);
  return rep;
}

EstimationReport full_pipeline(std::span<const double> y, const GaussianOutputModel& outputs_hat,
                               const PipelineOptions& options) {
  const auto t_start = Clock::now();
  EstimationReport rep;
  rep.discrete = false;
  rep.T = static_cast<long long>(y.size());

  // Pass 1 collects the density statistics (xi and, if requested, eta').
  auto t0 = Clock::now();
  PairStatsAccumulator density_stats(outputs_hat.states());
  {
    VectorXd f(outputs_hat.states());
    for (double v : y) {
      f = outputs_hat.density_vector(v);
      density_stats.add(f);
    }
  }
  if (density_stats.count() < 2) throw SequenceTooShort("pipeline needs at least two observations");
  ContinuousMoments moments;
  moments.T = density_stats.count();
  moments.xi_hat = density_stats.single_sum() / static_cast<double>(moments.T);
  if (options.use_eta_prime) {
    moments.eta_prime_hat = density_stats.pair_sum() / static_cast<double>(moments.T - 1);
  }
  rep.timings.moments_ms = ms_since(t0);

  rep.effective.K = gaussian_kernel_matrix(outputs_hat);
  rep.effective.sigma1_K = smallest_singular_value(rep.effective.K);

  t0 = Clock::now();
  rep.pi = estimate_pi_continuous(moments, rep.effective.K, options.weighted);
  rep.timings.pi_ms = ms_since(t0);
  const VectorXd pi_pos = clamp_positive(rep.pi.pi_hat);

  t0 = Clock::now();
  if (!options.use_eta_prime) {
    rep.effective.F = effective_observation_matrix(outputs_hat, pi_pos);
    rep.effective.sigma1_F = smallest_singular_value(*rep.effective.F);
    moments.eta_hat = empirical_eta(y, outputs_hat, pi_pos);  // pass 2
  }
  rep.timings.moments_ms += ms_since(t0);

  t0 = Clock::now();
  AEstimateOptions aopts{options.weighted, options.stationarity, options.use_eta_prime};
  rep.A = estimate_A_continuous(moments, rep.effective, pi_pos, aopts);
  rep.timings.a_ms = ms_since(t0);

  rep.timings.total_ms = ms_since(t_start);
  return rep;
}

EstimationReport pipeline_from_moments(const DiscreteMoments& moments,
                                       const DiscreteOutputModel& outputs_hat,
                                       const PipelineOptions& options) {
  EstimationReport rep;
  rep.discrete = true;
  rep.T = moments.T;
  rep.pi = estimate_pi_discrete(moments, outputs_hat);
  rep.effective.K = outputs_hat.emission();
  rep.effective.sigma1_K = smallest_singular_value(outputs_hat.emission());
  AEstimateOptions aopts{options.weighted, options.stationarity, false};
  rep.A = estimate_A_discrete(moments, outputs_hat, clamp_positive(rep.pi.pi_hat), aopts);
  return rep;
}

EstimationReport pipeline_from_moments(const ContinuousMoments& moments,
                                       const GaussianOutputModel& outputs_hat,
                                       const PipelineOptions& options) {
  EstimationReport rep;
  rep.discrete = false;
  rep.T = moments.T;
  rep.effective.K = gaussian_kernel_matrix(outputs_hat);
  rep.effective.sigma1_K = smallest_singular_value(rep.effective.K);
  rep.pi = estimate_pi_continuous(moments, rep.effective.K, options.weighted);
  const VectorXd pi_pos = clamp_positive(rep.pi.pi_hat);
  ContinuousMoments local = moments;
  if (!options.use_eta_prime) {
    rep.effective.F = effective_observation_matrix(outputs_hat, pi_pos);
    rep.effective.sigma1_F = smallest_singular_value(*rep.effective.F);
  }
  AEstimateOptions aopts{options.weighted, options.stationarity, options.use_eta_prime};
  rep.A = estimate_A_continuous(local, rep.effective, pi_pos, aopts);
  return rep;
}

GaussianOutputModel perturb_outputs(const GaussianOutputModel& outputs, double epsilon,
                                    std::uint64_t seed) {
  if (epsilon < 0.0) throw InvalidConfig("perturbation size must be nonnegative");
  const int n = outputs.states();
  if (epsilon == 0.0) return outputs;
  Rng rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const VectorXd dir = rng.unit_direction(2 * n);
    const VectorXd mu = outputs.mu() + epsilon * dir.head(n);
    const VectorXd s2 = outputs.sigma2() + epsilon * dir.tail(n);
    if (s2.minCoeff() > 0.0) return GaussianOutputModel(mu, s2);
  }
  throw InvalidConfig("could not find a perturbation direction keeping variances positive");
}

}  // namespace hmmqp
