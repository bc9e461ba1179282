#pragma once

#include "matchrl/core.hpp"

namespace matchrl {

// Bounded transportation problem: maximize sum r_ij q_ij over nonnegative
// integer matrices with row sums <= x and column sums <= c. Solved with a
// successive-shortest-path min-cost flow; the returned matrix is the
// lexicographically smallest optimum in row-major order.
MatchingMatrix solve_single_period(const State& x, const IVec& c, const Vec& R, int m, int n);

// Same solver without the lexicographic refinement pass; returns an optimal
// matrix in a deterministic but otherwise unspecified tie-break. Used where
// only the optimal objective matters (priors at scale, hot loops).
MatchingMatrix solve_single_period_any(const State& x, const IVec& c, const Vec& R, int m, int n);

double single_period_objective(const State& x, const IVec& c, const Vec& R, int m, int n);

} // namespace matchrl
