#include "hmmqp/qp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace hmmqp {

namespace {

constexpr double kPivotTol = 1e-10;     // residual pivot threshold for equality rows
constexpr double kFeasTol = 1e-8;       // phase-1 feasibility requirement
constexpr double kBoundTol = 1e-12;     // active bound detection

struct ReducedEqualities {
  MatrixXd E;  // independent rows only
  VectorXd e;
  std::vector<int> dropped;  // row indices of the original E that were dropped
};

ReducedEqualities reduce_equalities(const MatrixXd& E, const VectorXd& e) {
  ReducedEqualities out;
  if (E.rows() == 0) {
    out.E = E;
    out.e = e;
    return out;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(E.transpose());
  const auto& R = qr.matrixR();
  const int maxRank = static_cast<int>(std::min(E.rows(), E.cols()));
  int rank = 0;
  for (int i = 0; i < maxRank; ++i) {
    if (std::abs(R(i, i)) >= kPivotTol) ++rank;
  }
  const auto perm = qr.colsPermutation().indices();
  std::vector<int> keep(perm.data(), perm.data() + rank);
  std::sort(keep.begin(), keep.end());
  out.E.resize(rank, E.cols());
  out.e.resize(rank);
  for (int i = 0; i < rank; ++i) {
    out.E.row(i) = E.row(keep[i]);
    out.e[i] = e[keep[i]];
  }
  std::vector<bool> kept(E.rows(), false);
  for (int k : keep) kept[k] = true;
  for (int i = 0; i < E.rows(); ++i) {
    if (!kept[i]) out.dropped.push_back(i);
  }
  return out;
}

double objective(const MatrixXd& M, const VectorXd& h, const VectorXd& x) {
  return 0.5 * x.dot(M * x) - h.dot(x);
}

// Core iteration shared by phase 1 and the main solve. Assumes x is feasible
// (x >= 0, E x = e up to the caller's phase-1 residual).
QPSolution active_set_iterate(const MatrixXd& M, const VectorXd& h, const MatrixXd& E, VectorXd x,
                              int max_iters) {
  const int d = static_cast<int>(x.size());
  const int p = static_cast<int>(E.rows());

  std::vector<bool> active(d);
  for (int i = 0; i < d; ++i) active[i] = x[i] <= kBoundTol;

  const double scale = std::max({1.0, M.cwiseAbs().maxCoeff(), h.size() ? h.cwiseAbs().maxCoeff() : 0.0});
  const double step_tol = 1e-13 * std::max(1.0, x.cwiseAbs().maxCoeff());

#ifndef NDEBUG
  double prev_obj = objective(M, h, x);
#endif

  int iter = 0;
  VectorXd lambda(p);
  for (; iter < max_iters; ++iter) {
    std::vector<int> free_idx;
    free_idx.reserve(d);
    for (int i = 0; i < d; ++i) {
      if (!active[i]) free_idx.push_back(i);
    }
    const int nf = static_cast<int>(free_idx.size());

    // EQP step restricted to the free variables: direction in null(E_f).
    VectorXd dir = VectorXd::Zero(d);
    Eigen::ColPivHouseholderQR<MatrixXd> eqr;
    int erank = 0;
    if (nf > 0) {
      MatrixXd Ef(p, nf);
      MatrixXd Mf(nf, nf);
      VectorXd gf(nf);
      for (int a = 0; a < nf; ++a) {
        if (p > 0) Ef.col(a) = E.col(free_idx[a]);
        gf[a] = h[free_idx[a]];
        for (int b = 0; b < nf; ++b) Mf(a, b) = M(free_idx[a], free_idx[b]);
      }
      VectorXd xf(nf);
      for (int a = 0; a < nf; ++a) xf[a] = x[free_idx[a]];
      const VectorXd rhs = gf - Mf * xf;  // -gradient restricted to free vars

      VectorXd df;
      if (p == 0) {
        df = Mf.completeOrthogonalDecomposition().solve(rhs);
      } else {
        eqr.compute(Ef.transpose());
        const auto& R = eqr.matrixR();
        const int mr = std::min(nf, p);
        erank = 0;
        for (int i = 0; i < mr; ++i) {
          if (std::abs(R(i, i)) >= kPivotTol) ++erank;
        }
        const int nz = nf - erank;
        if (nz <= 0) {
          df = VectorXd::Zero(nf);
        } else {
          const MatrixXd Q = eqr.householderQ() * MatrixXd::Identity(nf, nf);
          const MatrixXd Z = Q.rightCols(nz);  // E_f * Z = 0
          const MatrixXd Mz = Z.transpose() * Mf * Z;
          const VectorXd rz = Z.transpose() * rhs;
          Eigen::LDLT<MatrixXd> ldlt(Mz);
          VectorXd z;
          if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            z = ldlt.solve(rz);
          } else {
            z = Mz.completeOrthogonalDecomposition().solve(rz);
          }
          df = Z * z;
        }
      }
      for (int a = 0; a < nf; ++a) dir[free_idx[a]] = df[a];
    }

    if (dir.cwiseAbs().maxCoeff() <= step_tol || nf == 0) {
      // EQP-optimal for this working set: check multipliers of the bounds.
      const VectorXd g = M * x - h;
      if (p > 0) {
        std::vector<int> free_idx2 = free_idx;
        if (free_idx2.empty()) {
          // All variables at the bound; multipliers from the full system.
          lambda = E.transpose().completeOrthogonalDecomposition().solve(g).eval();
        } else {
          MatrixXd Ef(p, static_cast<int>(free_idx2.size()));
          VectorXd gf(static_cast<int>(free_idx2.size()));
          for (std::size_t a = 0; a < free_idx2.size(); ++a) {
            Ef.col(static_cast<int>(a)) = E.col(free_idx2[a]);
            gf[static_cast<int>(a)] = g[free_idx2[a]];
          }
          lambda = Ef.transpose().completeOrthogonalDecomposition().solve(gf);
        }
      }
      VectorXd mu = g;
      if (p > 0) mu -= E.transpose() * lambda;

      int worst = -1;
      double worst_val = -kKktTol * scale;
      for (int i = 0; i < d; ++i) {
        if (active[i] && mu[i] < worst_val) {
          worst_val = mu[i];
          worst = i;  // strict < keeps the lowest index on ties
        }
      }
      if (worst < 0) break;  // KKT satisfied
      active[worst] = false;
      continue;
    }

    // Ratio test toward the EQP minimizer of the current working set.
    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < d; ++i) {
      if (!active[i] && dir[i] < -step_tol) {
        const double a = -x[i] / dir[i];
        if (a < alpha - 1e-15) {
          alpha = a;
          blocking = i;
        }
      }
    }
    x += alpha * dir;
    if (blocking >= 0) {
      x[blocking] = 0.0;
      active[blocking] = true;
    }
    for (int i = 0; i < d; ++i) {
      if (x[i] < 0.0 && x[i] > -kBoundTol) x[i] = 0.0;
    }

#ifndef NDEBUG
    const double cur_obj = objective(M, h, x);
    assert(cur_obj <= prev_obj + 1e-9 * std::max(1.0, std::abs(prev_obj)));
    prev_obj = cur_obj;
#endif
  }
  if (iter >= max_iters) {
    throw MaxIterationsExceeded("active-set solver hit the iteration cap (" +
                                std::to_string(max_iters) + "); instance likely ill-conditioned");
  }

  QPSolution sol;
  sol.x = x;
  sol.iterations = iter + 1;
  for (int i = 0; i < d; ++i) {
    if (active[i]) sol.active_set.push_back(i);
  }
  return sol;
}

double kkt_residual(const MatrixXd& M, const VectorXd& h, const MatrixXd& E, const VectorXd& e,
                    const VectorXd& x) {
  const double scale = std::max({1.0, M.cwiseAbs().maxCoeff(), h.size() ? h.cwiseAbs().maxCoeff() : 0.0});
  const VectorXd g = M * x - h;
  VectorXd mu = g;
  if (E.rows() > 0) {
    // Fit the equality multipliers on the free coordinates only; bound
    // multipliers live on the active ones.
    std::vector<int> free_idx;
    for (int i = 0; i < x.size(); ++i) {
      if (x[i] > kBoundTol) free_idx.push_back(i);
    }
    VectorXd lambda;
    if (free_idx.empty()) {
      lambda = E.transpose().completeOrthogonalDecomposition().solve(g).eval();
    } else {
      MatrixXd Eft(static_cast<int>(free_idx.size()), E.rows());
      VectorXd gf(static_cast<int>(free_idx.size()));
      for (std::size_t a = 0; a < free_idx.size(); ++a) {
        Eft.row(static_cast<int>(a)) = E.col(free_idx[a]).transpose();
        gf[static_cast<int>(a)] = g[free_idx[a]];
      }
      lambda = Eft.completeOrthogonalDecomposition().solve(gf);
    }
    mu -= E.transpose() * lambda;
  }
  double stat = 0.0, comp = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    if (x[i] > kBoundTol) {
      stat = std::max(stat, std::abs(mu[i]));  // free variable: gradient must vanish
    } else {
      stat = std::max(stat, std::max(0.0, -mu[i]));  // bound multiplier must be >= 0
    }
    comp = std::max(comp, std::abs(x[i] * mu[i]));
  }
  double primal = 0.0;
  if (E.rows() > 0) primal = (E * x - e).cwiseAbs().maxCoeff();
  const double neg = std::max(0.0, -x.minCoeff());
  return std::max({stat / scale, comp / scale, primal, neg});
}

}  // namespace

QPSolution solve(const SimplexQP& qp) {
  const int d = static_cast<int>(qp.M.rows());
  if (qp.M.cols() != d || qp.h.size() != d) throw InvalidConfig("QP dimensions are inconsistent");
  if (qp.E.rows() != qp.e.size()) throw InvalidConfig("QP equality dimensions are inconsistent");
  const double asym = (qp.M - qp.M.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * std::max(1.0, qp.M.cwiseAbs().maxCoeff())) {
    throw InvalidConfig("QP matrix must be symmetric");
  }
  const MatrixXd M = 0.5 * (qp.M + qp.M.transpose());

  ReducedEqualities red = reduce_equalities(qp.E, qp.e);

  // Phase 1: feasible starting point.
  VectorXd x0;
  bool have_start = false;
  if (qp.x0 && qp.x0->size() == d && qp.x0->minCoeff() >= 0.0) {
    if (red.E.rows() == 0 || (red.E * (*qp.x0) - red.e).cwiseAbs().maxCoeff() <= kFeasTol) {
      x0 = *qp.x0;
      have_start = true;
    }
  }
  if (!have_start) {
    if (red.E.rows() == 0) {
      x0 = VectorXd::Zero(d);
    } else {
      // min |Ex - e|^2 over x >= 0, solved with the same machinery.
      const MatrixXd Mp = red.E.transpose() * red.E;
      const VectorXd hp = red.E.transpose() * red.e;
      QPSolution feas = active_set_iterate(Mp, hp, MatrixXd(0, d), VectorXd::Zero(d), 50 * std::max(d, 4));
      x0 = feas.x;
      if ((red.E * x0 - red.e).cwiseAbs().maxCoeff() > kFeasTol) {
        throw Infeasible("QP equality constraints admit no nonnegative solution");
      }
    }
  }
  for (int r : red.dropped) {
    if (std::abs(qp.E.row(r).dot(x0) - qp.e[r]) > kFeasTol) {
      throw Infeasible("dependent equality row is inconsistent");
    }
  }

  QPSolution sol = active_set_iterate(M, qp.h, red.E, x0, 50 * std::max(d, 4));
  sol.kkt_residual = kkt_residual(M, qp.h, red.E, red.e, sol.x);
  return sol;
}

std::optional<VectorXd> solve_normal_equations(const MatrixXd& W) {
  if (W.rows() != W.cols() || W.rows() == 0) throw InvalidConfig("W must be square");
  Eigen::JacobiSVD<MatrixXd> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues()[0];
  const double smin = svd.singularValues()[svd.singularValues().size() - 1];
  if (smin <= 0.0 || smax / smin >= 1e12) {
    throw SingularMatrix("normal-equation matrix is singular or near-singular");
  }
  const VectorXd x = svd.solve(VectorXd::Ones(W.rows()));
  if (x.minCoeff() <= 0.0) return std::nullopt;  // caller must fall back to the QP
  return x / x.sum();
}

double perturbation_bound(const MatrixXd& M, const VectorXd& h, const MatrixXd& M_hat,
                          const VectorXd& h_hat, const VectorXd& x) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()));
  const double lambda = es.eigenvalues().minCoeff();
  const MatrixXd dM = M_hat - M;
  const double dM2 = dM.cwiseAbs().maxCoeff() == 0.0
                         ? 0.0
                         : Eigen::JacobiSVD<MatrixXd>(dM).singularValues()[0];
  const double eps = std::max(dM2, (h_hat - h).norm());
  if (eps >= lambda) {
    throw BoundInapplicable("perturbation size exceeds the smallest eigenvalue");
  }
  return eps / (lambda - eps) * (1.0 + x.norm());
}

SimplexQP weighted_simplex_least_squares(const MatrixXd& A, const VectorXd& b, const VectorXd& w) {
  if (A.rows() != b.size() || A.rows() != w.size()) throw InvalidConfig("weighted LS dimensions mismatch");
  const int d = static_cast<int>(A.cols());
  SimplexQP qp;
  const MatrixXd Aw = w.asDiagonal() * A;
  qp.M = A.transpose() * Aw;
  qp.M = 0.5 * (qp.M + qp.M.transpose()).eval();
  qp.h = Aw.transpose() * b;
  qp.E = MatrixXd::Ones(1, d);
  qp.e = VectorXd::Ones(1);
  qp.x0 = VectorXd::Constant(d, 1.0 / d);
  return qp;
}

}  // namespace hmmqp
