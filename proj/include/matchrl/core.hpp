#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "matchrl/rng.hpp"

namespace matchrl {

using Vec = std::vector<double>;
using IVec = std::vector<int>;

// Integer matching quantities q_ij between m demand types and n supply types.
struct MatchingMatrix {
    int rows = 0;
    int cols = 0;
    IVec q; // row-major

    MatchingMatrix() = default;
    MatchingMatrix(int m, int n) : rows(m), cols(n), q(static_cast<std::size_t>(m) * n, 0) {}

    int& at(int i, int j) { return q[static_cast<std::size_t>(i) * cols + j]; }
    int at(int i, int j) const { return q[static_cast<std::size_t>(i) * cols + j]; }

    IVec row_totals() const;
    IVec col_totals() const;

    bool operator==(const MatchingMatrix& o) const {
        return rows == o.rows && cols == o.cols && q == o.q;
    }
};

// Outstanding demand vector, each component in [0, demand_limit].
struct State {
    IVec x;

    bool operator==(const State& o) const { return x == o.x; }
};

// Immutable description of a matching problem.
struct ProblemInstance {
    int m = 0;                        // demand types
    int n = 0;                        // supply types
    int horizon_T = 0;                // 0 = stationary / episodic regime
    double gamma = 0.9;               // discount factor in [0,1)
    IVec capacities;                  // length n
    std::vector<Vec> demand_pmfs;     // m pmfs over {0..support_i}
    Vec reward;                       // m x n, row-major
    double k1 = 0.0;                  // demand-side penalty constant
    double k2 = 0.0;                  // capacity-side penalty constant
    int demand_limit = 0;             // state truncation bound N_d
    std::uint64_t seed = 0;

    double r(int i, int j) const { return reward[static_cast<std::size_t>(i) * n + j]; }
    double max_reward() const;

    // Throws std::invalid_argument on any violated invariant.
    void validate(double pmf_tol = 1e-9) const;
};

struct StepOutcome {
    State next_state;
    double net_reward = 0.0;
    double raw_reward = 0.0;
    IVec demand_drawn;
    double demand_penalty = 0.0;
    double capacity_penalty = 0.0;
};

// r_ij = prize - delta_ij.
Vec build_horizontal_reward(double prize, const Vec& delta, int m, int n);

// r_ij = f_d(a_i) + f_s(b_j), identity maps by default; affine maps via the
// scale/offset pairs.
Vec build_vertical_reward(const Vec& a, const Vec& b,
                          double a_scale = 1.0, double a_offset = 0.0,
                          double b_scale = 1.0, double b_offset = 0.0);

// One demand draw per type, independent across types.
IVec sample_demand(const ProblemInstance& inst, RngStream& rng);

// Sum of elementwise products of R and Q.
double matching_reward(const Vec& R, const MatchingMatrix& Q);

// k1 * sum_i max(0, rowtot_i - x_i)
double demand_penalty(const State& x, const MatchingMatrix& Q, double k1);

// k2 * sum_j max(0, coltot_j - c_j)
double capacity_penalty(const MatchingMatrix& Q, const IVec& c, double k2);

bool is_feasible(const State& x, const MatchingMatrix& Q, const IVec& c);

// All nonnegative integer matrices with row sums <= x and column sums <= c,
// in lexicographic row-major order (the zero matrix comes first). Throws
// std::length_error when the count would exceed `cap`.
std::vector<MatchingMatrix> enumerate_feasible_actions(const State& x, const IVec& c,
                                                       std::size_t cap = 2'000'000);

// One environment transition. Infeasible actions are penalized, never
// rejected; matched quantities beyond x_i do not leave the system.
StepOutcome step(const ProblemInstance& inst, const State& x, const MatchingMatrix& Q,
                 RngStream& rng);

// Default penalty constant: twice the largest unit reward, so no violation is
// ever profitable per unit.
double default_penalty_constant(const Vec& reward);

} // namespace matchrl
