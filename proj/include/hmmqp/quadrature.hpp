#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "hmmqp/errors.hpp"

namespace hmmqp {

struct QuadratureOptions {
  double rel_tol = 1e-9;
  int max_depth = 40;
};

namespace detail {

template <class F>
double simpson(F&& f, double a, double fa, double b, double fb, double& fm) {
  const double m = 0.5 * (a + b);
  fm = f(m);
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

// Classic adaptive Simpson with Richardson correction; eps is an absolute
// budget for this segment and halves on each split.
template <class F>
double adaptive(F&& f, double a, double fa, double m, double fm, double b, double fb, double whole,
                double eps, int depth, int max_depth) {
  if (depth > max_depth) {
    throw QuadratureNotConverged("adaptive Simpson exceeded depth cap");
  }
  double flm = 0.0, frm = 0.0;
  const double left = simpson(f, a, fa, m, fm, flm);
  const double right = simpson(f, m, fm, b, fb, frm);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * eps) {
    return left + right + delta / 15.0;
  }
  return adaptive(f, a, fa, 0.5 * (a + m), flm, m, fm, left, 0.5 * eps, depth + 1, max_depth) +
         adaptive(f, m, fm, 0.5 * (m + b), frm, b, fb, right, 0.5 * eps, depth + 1, max_depth);
}

}  // namespace detail

/// Integrates f over [lo, hi] by adaptive composite Simpson. The interval is
/// pre-split at the given interior points (integrand peaks) before refining;
/// rel_tol is anchored to a coarse estimate of the total integral magnitude.
template <class F>
double integrate_adaptive(F&& f, double lo, double hi, std::span<const double> interior_splits = {},
                          QuadratureOptions opt = {}) {
  std::vector<double> knots;
  knots.push_back(lo);
  for (double s : interior_splits) {
    if (s > lo && s < hi) knots.push_back(s);
  }
  knots.push_back(hi);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  const int nseg = static_cast<int>(knots.size()) - 1;
  std::vector<double> fa(nseg), fb(nseg), fm(nseg), coarse(nseg);
  double scale = 0.0;
  for (int s = 0; s < nseg; ++s) {
    fa[s] = f(knots[s]);
    fb[s] = f(knots[s + 1]);
    coarse[s] = detail::simpson(f, knots[s], fa[s], knots[s + 1], fb[s], fm[s]);
    scale += std::abs(coarse[s]);
  }
  const double eps_total = opt.rel_tol * std::max(scale, 1e-300);

  double total = 0.0;
  for (int s = 0; s < nseg; ++s) {
    const double a = knots[s], b = knots[s + 1];
    total += detail::adaptive(f, a, fa[s], 0.5 * (a + b), fm[s], b, fb[s], coarse[s],
                              eps_total / nseg, 0, opt.max_depth);
  }
  return total;
}

}  // namespace hmmqp
