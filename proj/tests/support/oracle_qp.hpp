#pragma once

#include "hmmqp/qp.hpp"

namespace hmmqp::testing {

/// Brute-force reference solve: enumerates all 2^d active sets, solves each
/// equality-constrained subproblem by a least-squares KKT solve, and returns
/// the feasible candidate with the smallest objective. Independent of the
/// active-set iteration it checks.
VectorXd oracle_solve(const SimplexQP& qp);

double qp_objective(const SimplexQP& qp, const VectorXd& x);

}  // namespace hmmqp::testing
