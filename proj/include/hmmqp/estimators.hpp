#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hmmqp/model.hpp"
#include "hmmqp/moments.hpp"
#include "hmmqp/qp.hpp"

namespace hmmqp {

enum class PiMethod { normal_equations, weighted_qp, unweighted_qp };

struct SolverDiagnostics {
  int iterations = 0;
  double kkt_residual = 0.0;
};

struct PiEstimate {
  VectorXd pi_hat;
  PiMethod method = PiMethod::normal_equations;
  SolverDiagnostics solver;
  /// Smallest singular value of the frequency-weighted observation operator
  /// (rows scaled by 1/sqrt of the observed frequencies).
  double sigma1_weighted = 0.0;
};

struct AEstimateOptions {
  bool weighted = true;
  /// Enforce A pi_hat = pi_hat. Defaults to the weighted setting: on for the
  /// weighted objective, off for the unweighted analysis variant.
  std::optional<bool> stationarity;
  /// Continuous outputs only: estimate from the density pair moments and the
  /// kernel matrix instead of the posterior pair moments and F.
  bool use_eta_prime = false;

  bool stationarity_on() const { return stationarity.value_or(weighted); }
};

struct AEstimate {
  TransitionMatrix A_hat;
  bool weighted = true;
  bool stationarity_constraint = true;
  SolverDiagnostics solver;
};

/// pi from symbol frequencies: solves W x = 1 with W = B' diag(1/rho) B and
/// normalizes; falls back to the simplex QP when the linear solution has
/// nonpositive entries (small-sample case) or W is singular.
PiEstimate estimate_pi_discrete(const DiscreteMoments& moments, const DiscreteOutputModel& outputs);

/// pi from mean component densities: simplex QP on |xi - Kx| in the
/// 1/xi-weighted norm (default) or the plain 2-norm.
PiEstimate estimate_pi_continuous(const ContinuousMoments& moments, const MatrixXd& K,
                                  bool weighted = true);

/// Dense (m^2) x (n^2) operator mapping vec(A) to the stacked pair law:
/// row (k + m k'), column (i + n j) holds pi_j G(k, j) G(k', i). With exact
/// inputs, C vec(A) equals the stacked analytic pair moments.
MatrixXd build_C(const VectorXd& pi_hat, const MatrixXd& G);

AEstimate estimate_A_discrete(const DiscreteMoments& moments, const DiscreteOutputModel& outputs,
                              const VectorXd& pi_hat, const AEstimateOptions& options = {});

/// effective.F (with eta) drives the default path; effective.K (with
/// eta_prime) when options.use_eta_prime.
AEstimate estimate_A_continuous(const ContinuousMoments& moments, const EffectiveMatrices& effective,
                                const VectorXd& pi_hat, const AEstimateOptions& options = {});

struct StageTimings {
  double sample_ms = 0.0;
  double mixture_ms = 0.0;
  double moments_ms = 0.0;
  double pi_ms = 0.0;
  double a_ms = 0.0;
  double bw_ms = 0.0;
  double total_ms = 0.0;
};

struct EstimationReport {
  PiEstimate pi;
  AEstimate A;
  /// Continuous outputs: K and F with smallest singular values. Discrete
  /// outputs: the two slots hold B and the frequency-weighted B.
  EffectiveMatrices effective;
  StageTimings timings;
  long long T = 0;
  bool discrete = false;
  // Filled when ground truth is available (benchmark runs).
  std::optional<std::vector<int>> alignment;
  std::optional<double> pi_error_l2;
  std::optional<double> a_error_fro;
};

struct PipelineOptions {
  bool weighted = true;
  std::optional<bool> stationarity;
  bool use_eta_prime = false;
};

/// Single pass for the pair statistics, pi estimate, effective matrices, and
/// the transition estimate, with per-stage timings.
EstimationReport full_pipeline(std::span<const int> y, const DiscreteOutputModel& outputs_hat,
                               const PipelineOptions& options = {});
EstimationReport full_pipeline(std::span<const double> y, const GaussianOutputModel& outputs_hat,
                               const PipelineOptions& options = {});

/// Population-moment ("infinite sample") variants used by exact-recovery
/// tests and the benchmark's exact mode.
EstimationReport pipeline_from_moments(const DiscreteMoments& moments,
                                       const DiscreteOutputModel& outputs_hat,
                                       const PipelineOptions& options = {});
EstimationReport pipeline_from_moments(const ContinuousMoments& moments,
                                       const GaussianOutputModel& outputs_hat,
                                       const PipelineOptions& options = {});

/// Moves (mu, sigma2) jointly by epsilon along a seeded unit-norm random
/// direction in parameter space; directions leaving some sigma2 nonpositive
/// are redrawn.
GaussianOutputModel perturb_outputs(const GaussianOutputModel& outputs, double epsilon,
                                    std::uint64_t seed);

}  // namespace hmmqp
