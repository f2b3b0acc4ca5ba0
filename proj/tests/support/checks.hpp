#pragma once

#include <cmath>

namespace hmmqp::testing {

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace hmmqp::testing
