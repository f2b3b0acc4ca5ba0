#include "hmmqp/mixture.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

#include "hmmqp/errors.hpp"
#include "hmmqp/rng.hpp"

namespace hmmqp {

namespace {

struct EmRun {
  VectorXd weights;
  VectorXd mu;
  VectorXd sigma2;
  double loglik = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool degenerate = false;
};

struct Init {
  VectorXd mu;
  VectorXd sigma2;
};

Init quantile_init(const VectorXd& sorted_y, int n, double fallback_var) {
  const auto T = sorted_y.size();
  Init init{VectorXd(n), VectorXd(n)};
  for (int k = 0; k < n; ++k) {
    const auto lo = T * k / n;
    const auto hi = std::max(T * (k + 1) / n, lo + 1);
    const auto seg = sorted_y.segment(lo, hi - lo);
    init.mu[k] = seg.mean();
    const double v = (seg.array() - init.mu[k]).square().mean();
    init.sigma2[k] = std::max(v, 1e-3 * fallback_var);
  }
  return init;
}

Init kmeanspp_init(const VectorXd& y, int n, double fallback_var, Rng& rng) {
  const auto T = y.size();
  const Eigen::Index pool = std::min<Eigen::Index>(T, 2048);
  const Eigen::Index stride = std::max<Eigen::Index>(1, T / pool);
  std::vector<double> pts;
  pts.reserve(pool);
  for (Eigen::Index t = 0; t < T; t += stride) pts.push_back(y[t]);

  Init init{VectorXd(n), VectorXd::Constant(n, fallback_var / (n * n))};
  init.mu[0] = pts[static_cast<std::size_t>(rng.uniform() * pts.size())];
  std::vector<double> d2(pts.size());
  for (int k = 1; k < n; ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) best = std::min(best, (pts[i] - init.mu[c]) * (pts[i] - init.mu[c]));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      init.mu[k] = pts[static_cast<std::size_t>(rng.uniform() * pts.size())];
      continue;
    }
    double u = rng.uniform() * total;
    std::size_t pick = pts.size() - 1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      u -= d2[i];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    init.mu[k] = pts[pick];
  }
  return init;
}

EmRun run_em(const VectorXd& y, int n, const Init& init, double var_floor, const EmConfig& config) {
  const auto T = y.size();
  EmRun run;
  run.weights = VectorXd::Constant(n, 1.0 / n);
  run.mu = init.mu;
  run.sigma2 = init.sigma2.cwiseMax(var_floor);

  MatrixXd resp(T, n);
  double prev = -std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    // E step: weighted densities, then normalize rows.
    for (int k = 0; k < n; ++k) {
      resp.col(k) = run.weights[k] / std::sqrt(2.0 * M_PI * run.sigma2[k]) *
                    (-0.5 * (y.array() - run.mu[k]).square() / run.sigma2[k]).exp();
    }
    const VectorXd rowsum = resp.rowwise().sum().cwiseMax(1e-300);
    run.loglik = rowsum.array().log().sum();
    resp.array().colwise() /= rowsum.array();

    assert(run.loglik >= prev - 1e-10 * std::max(1.0, std::abs(prev)));

    // M step.
    const VectorXd nk = resp.colwise().sum();
    if (nk.minCoeff() <= 1e-10) {
      run.degenerate = true;
      return run;
    }
    run.weights = nk / static_cast<double>(T);
    for (int k = 0; k < n; ++k) {
      run.mu[k] = resp.col(k).dot(y) / nk[k];
      run.sigma2[k] = resp.col(k).dot((y.array() - run.mu[k]).square().matrix()) / nk[k];
    }
    if (run.sigma2.minCoeff() < var_floor) {
      run.degenerate = true;
      return run;
    }

    run.iterations = iter;
    if (run.loglik - prev < config.tol && iter > 1) break;
    prev = run.loglik;
  }
  return run;
}

}  // namespace

MixtureFit em_fit(std::span<const double> y, int n, const EmConfig& config) {
  if (n < 1) throw InvalidConfig("component count must be positive");
  const auto T = static_cast<Eigen::Index>(y.size());
  if (T < 10LL * n) throw SequenceTooShort("em_fit needs at least 10 observations per component");

  const Eigen::Map<const VectorXd> ym(y.data(), T);
  const VectorXd yv = ym;
  const double mean = yv.mean();
  const double var = (yv.array() - mean).square().mean();
  if (var <= 0.0) throw DegenerateComponent("data has zero variance");
  const double var_floor = 1e-6 * var;

  VectorXd sorted = yv;
  std::sort(sorted.data(), sorted.data() + sorted.size());

  EmRun best;
  int best_restart = -1;
  int ok_runs = 0;
  const int restarts = std::max(1, config.restarts);
  for (int r = 0; r < restarts; ++r) {
    Rng rng(config.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(r + 1));
    const Init init = r == 0 ? quantile_init(sorted, n, var) : kmeanspp_init(yv, n, var, rng);
    EmRun run = run_em(yv, n, init, var_floor, config);
    if (run.degenerate) continue;
    ++ok_runs;
    if (best_restart < 0 || run.loglik > best.loglik) {
      best = std::move(run);
      best_restart = r;
    }
  }
  if (best_restart < 0) throw DegenerateComponent("every EM restart collapsed a component");

  MixtureFit fit{best.weights, GaussianOutputModel(best.mu, best.sigma2), best.loglik,
                 best.iterations, ok_runs};
  return fit;
}

std::vector<int> align_components(const GaussianOutputModel& estimated,
                                  const GaussianOutputModel& truth) {
  const int n = truth.states();
  if (estimated.states() != n) throw InvalidConfig("component counts differ");
  if (n > 10) throw InvalidConfig("brute-force alignment is limited to 10 components");

  std::vector<int> perm(n), best(n);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      cost += std::abs(estimated.mu()[perm[i]] - truth.mu()[i]) +
              std::abs(estimated.sigma2()[perm[i]] - truth.sigma2()[i]);
    }
    if (cost < best_cost) {  // strict: first lexicographic minimizer wins
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace hmmqp
