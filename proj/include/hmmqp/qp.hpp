#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "hmmqp/errors.hpp"

namespace hmmqp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Fixed KKT tolerance; statistical error dominates everywhere, so this is
/// deliberately not configurable per call.
inline constexpr double kKktTol = 1e-9;

/// minimize (1/2) x'Mx - h'x  subject to  x >= 0,  Ex = e.
/// M must be symmetric positive semidefinite. E may contain linearly
/// dependent rows; they are detected by column-pivoted QR and dropped.
struct SimplexQP {
  MatrixXd M;
  VectorXd h;
  MatrixXd E;  // p x d, may be empty (p == 0)
  VectorXd e;
  /// Optional feasible starting point; verified, phase-1 runs if absent or
  /// infeasible.
  std::optional<VectorXd> x0;
};

struct QPSolution {
  VectorXd x;
  double kkt_residual = 0.0;  // scale-normalized, see solve()
  int iterations = 0;
  std::vector<int> active_set;  // indices with x_i at the zero bound
};

/// Primal active-set method (null-space steps). Deterministic: ties in the
/// entering and leaving constraint choices are broken by lowest index. The
/// reported kkt_residual is max of stationarity and complementarity scaled by
/// max(1, |M|_inf, |h|_inf), plus absolute equality residual and negativity.
/// Throws Infeasible when phase 1 leaves a residual above 1e-8, and
/// MaxIterationsExceeded after 50*d iterations.
QPSolution solve(const SimplexQP& qp);

/// Solves W x = 1 and returns x / |x|_1 when all entries are strictly
/// positive; returns nullopt (caller should fall back to the constrained QP)
/// otherwise. Throws SingularMatrix when cond(W) >= 1e12.
std::optional<VectorXd> solve_normal_equations(const MatrixXd& W);

/// Classical stability bound for definite QPs: with lambda = lambda_min(M)
/// and eps = max(|M_hat - M|_2, |h_hat - h|_2), solutions of the perturbed
/// and original problems differ by at most eps/(lambda - eps) * (1 + |x|_2).
/// Throws BoundInapplicable when eps >= lambda.
double perturbation_bound(const MatrixXd& M, const VectorXd& h, const MatrixXd& M_hat,
                          const VectorXd& h_hat, const VectorXd& x);

/// Builds the QP for min |b - Ax|^2_w over the probability simplex, with
/// weight vector w >= 0 (zero weights drop rows).
SimplexQP weighted_simplex_least_squares(const MatrixXd& A, const VectorXd& b, const VectorXd& w);

}  // namespace hmmqp
