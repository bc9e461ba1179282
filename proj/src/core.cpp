#include "matchrl/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace matchrl {

IVec MatchingMatrix::row_totals() const {
    IVec t(rows, 0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) t[i] += at(i, j);
    return t;
}

IVec MatchingMatrix::col_totals() const {
    IVec t(cols, 0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) t[j] += at(i, j);
    return t;
}

double ProblemInstance::max_reward() const {
    double mx = 0.0;
    for (double v : reward) mx = std::max(mx, v);
    return mx;
}

void ProblemInstance::validate(double pmf_tol) const {
    if (m < 1 || n < 1) throw std::invalid_argument("instance: m and n must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw std::invalid_argument("instance: gamma must be in [0,1)");
    if (static_cast<int>(capacities.size()) != n)
        throw std::invalid_argument("instance: capacities must have length n");
    for (int cj : capacities)
        if (cj < 0) throw std::invalid_argument("instance: capacities must be >= 0");
    if (static_cast<int>(demand_pmfs.size()) != m)
        throw std::invalid_argument("instance: need one demand pmf per demand type");
    for (const Vec& p : demand_pmfs) {
        if (p.empty()) throw std::invalid_argument("instance: empty demand pmf");
        double s = 0.0;
        for (double v : p) {
            if (v < 0.0) throw std::invalid_argument("instance: negative pmf entry");
            s += v;
        }
        if (std::abs(s - 1.0) > pmf_tol)
            throw std::invalid_argument("instance: demand pmf does not sum to 1");
    }
    if (reward.size() != static_cast<std::size_t>(m) * n)
        throw std::invalid_argument("instance: reward matrix must be m x n");
    if (k1 < 0.0 || k2 < 0.0) throw std::invalid_argument("instance: penalties must be >= 0");
    if (demand_limit < 0) throw std::invalid_argument("instance: demand_limit must be >= 0");
}

Vec build_horizontal_reward(double prize, const Vec& delta, int m, int n) {
    if (delta.size() != static_cast<std::size_t>(m) * n)
        throw std::invalid_argument("build_horizontal_reward: delta must be m x n");
    Vec r(delta.size());
    for (std::size_t k = 0; k < delta.size(); ++k) {
        if (delta[k] < 0.0)
            throw std::invalid_argument("build_horizontal_reward: distances must be >= 0");
        r[k] = prize - delta[k];
    }
    return r;
}

Vec build_vertical_reward(const Vec& a, const Vec& b, double a_scale, double a_offset,
                          double b_scale, double b_offset) {
    Vec r(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            r[i * b.size() + j] = (a_scale * a[i] + a_offset) + (b_scale * b[j] + b_offset);
    return r;
}

IVec sample_demand(const ProblemInstance& inst, RngStream& rng) {
    IVec d(inst.m);
    for (int i = 0; i < inst.m; ++i) d[i] = rng.categorical(inst.demand_pmfs[i]);
    return d;
}

double matching_reward(const Vec& R, const MatchingMatrix& Q) {
    if (R.size() != Q.q.size())
        throw std::invalid_argument("matching_reward: shape mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < R.size(); ++k) s += R[k] * Q.q[k];
    return s;
}

double demand_penalty(const State& x, const MatchingMatrix& Q, double k1) {
    IVec rt = Q.row_totals();
    double excess = 0.0;
    for (std::size_t i = 0; i < rt.size(); ++i)
        excess += std::max(0, rt[i] - x.x[i]);
    return k1 * excess;
}

double capacity_penalty(const MatchingMatrix& Q, const IVec& c, double k2) {
    IVec ct = Q.col_totals();
    double excess = 0.0;
    for (std::size_t j = 0; j < ct.size(); ++j)
        excess += std::max(0, ct[j] - c[j]);
    return k2 * excess;
}

bool is_feasible(const State& x, const MatchingMatrix& Q, const IVec& c) {
    IVec rt = Q.row_totals();
    for (std::size_t i = 0; i < rt.size(); ++i)
        if (rt[i] > x.x[i]) return false;
    IVec ct = Q.col_totals();
    for (std::size_t j = 0; j < ct.size(); ++j)
        if (ct[j] > c[j]) return false;
    return true;
}

namespace {

void enumerate_rec(const IVec& x, IVec& col_left, int m, int n, int cell, int row_left,
                   MatchingMatrix& cur, std::vector<MatchingMatrix>& out, std::size_t cap) {
    if (cell == m * n) {
        if (out.size() >= cap)
            throw std::length_error("enumerate_feasible_actions: action count exceeds cap");
        out.push_back(cur);
        return;
    }
    int i = cell / n;
    int j = cell % n;
    if (j == 0) row_left = x[i];
    int hi = std::min(row_left, col_left[j]);
    for (int v = 0; v <= hi; ++v) {
        cur.at(i, j) = v;
        col_left[j] -= v;
        enumerate_rec(x, col_left, m, n, cell + 1, row_left - v, cur, out, cap);
        col_left[j] += v;
    }
    cur.at(i, j) = 0;
}

} // namespace

std::vector<MatchingMatrix> enumerate_feasible_actions(const State& x, const IVec& c,
                                                       std::size_t cap) {
    int m = static_cast<int>(x.x.size());
    int n = static_cast<int>(c.size());
    std::vector<MatchingMatrix> out;
    MatchingMatrix cur(m, n);
    IVec col_left = c;
    enumerate_rec(x.x, col_left, m, n, 0, 0, cur, out, cap);
    return out;
}

StepOutcome step(const ProblemInstance& inst, const State& x, const MatchingMatrix& Q,
                 RngStream& rng) {
    StepOutcome o;
    o.demand_drawn = sample_demand(inst, rng);
    o.raw_reward = matching_reward(inst.reward, Q);
    o.demand_penalty = demand_penalty(x, Q, inst.k1);
    o.capacity_penalty = capacity_penalty(Q, inst.capacities, inst.k2);
    o.net_reward = o.raw_reward - o.demand_penalty - o.capacity_penalty;
    IVec rt = Q.row_totals();
    o.next_state.x.resize(inst.m);
    for (int i = 0; i < inst.m; ++i) {
        // Only quantities covered by outstanding demand leave the system.
        int executed = std::min(rt[i], x.x[i]);
        int next = x.x[i] + o.demand_drawn[i] - executed;
        o.next_state.x[i] = std::clamp(next, 0, inst.demand_limit);
    }
    return o;
}

double default_penalty_constant(const Vec& reward) {
    double mx = 0.0;
    for (double v : reward) mx = std::max(mx, v);
    return 2.0 * mx;
}

} // namespace matchrl
