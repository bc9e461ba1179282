#include "matchrl/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace matchrl {

ActionSpace ActionSpace::build(const ProblemInstance& inst, std::size_t per_state_cap,
                               std::size_t state_cap) {
    ActionSpace as;
    as.states = StateSpace(inst.m, inst.demand_limit);
    std::size_t ns = as.states.size();
    if (ns > state_cap)
        throw std::length_error("ActionSpace: truncated state space exceeds cap");
    as.actions.resize(ns);
    for (std::size_t s = 0; s < ns; ++s)
        as.actions[s] = enumerate_feasible_actions(as.states.state(s), inst.capacities,
                                                   per_state_cap);
    return as;
}

int ActionSpace::find(std::size_t state_idx, const MatchingMatrix& a) const {
    const auto& list = actions[state_idx];
    for (std::size_t k = 0; k < list.size(); ++k)
        if (list[k] == a) return static_cast<int>(k);
    return -1;
}

TransitionModel TransitionModel::build(const ProblemInstance& inst, Truncation trunc) {
    TransitionModel tm;
    tm.states_ = StateSpace(inst.m, inst.demand_limit);
    int K = inst.demand_limit + 1;
    tm.per_type_.resize(inst.m);
    for (int i = 0; i < inst.m; ++i) {
        const Vec& pmf = inst.demand_pmfs[i];
        tm.per_type_[i].assign(K, Vec(K, 0.0));
        for (int base = 0; base < K; ++base) {
            for (int d = 0; d < static_cast<int>(pmf.size()); ++d) {
                int next = base + d;
                if (next > inst.demand_limit) {
                    if (trunc == Truncation::Drop) continue;
                    next = inst.demand_limit;
                }
                tm.per_type_[i][base][next] += pmf[d];
            }
        }
    }
    return tm;
}

Vec TransitionModel::joint_row(const State& x, const MatchingMatrix& a) const {
    IVec rt = a.row_totals();
    IVec base(states_.m);
    for (int i = 0; i < states_.m; ++i)
        base[i] = std::max(0, x.x[i] - std::min(rt[i], x.x[i]));
    Vec row(states_.size(), 0.0);
    // Dense product over the grid; fine at test scale.
    for (std::size_t idx = 0; idx < row.size(); ++idx) {
        State nx = states_.state(idx);
        double p = 1.0;
        for (int i = 0; i < states_.m; ++i) p *= per_type_[i][base[i]][nx.x[i]];
        row[idx] = p;
    }
    return row;
}

Vec TransitionModel::expected_value_grid(const Vec& value) const {
    std::size_t K = static_cast<std::size_t>(states_.demand_limit + 1);
    std::size_t total = states_.size();
    Vec cur = value;
    Vec next(total);
    std::size_t stride = total / K; // axis 0 is most significant
    for (int i = 0; i < states_.m; ++i) {
        const auto& T = per_type_[i];
        std::size_t block = stride * K;
        for (std::size_t outer = 0; outer < total; outer += block) {
            for (std::size_t inner = 0; inner < stride; ++inner) {
                std::size_t p0 = outer + inner;
                for (std::size_t b = 0; b < K; ++b) {
                    const Vec& row = T[b];
                    double acc = 0.0;
                    for (std::size_t v = 0; v < K; ++v) acc += row[v] * cur[p0 + v * stride];
                    next[p0 + b * stride] = acc;
                }
            }
        }
        cur.swap(next);
        stride /= K;
    }
    return cur;
}

namespace {

// Per (state, action): immediate reward and the index of the post-matching
// base vector x - rowtot in the grid. Feasible actions only.
struct Backup {
    double reward;
    std::size_t base_idx;
};

std::vector<std::vector<Backup>> precompute_backups(const ProblemInstance& inst,
                                                    const ActionSpace& as) {
    std::vector<std::vector<Backup>> out(as.actions.size());
    for (std::size_t s = 0; s < as.actions.size(); ++s) {
        State x = as.states.state(s);
        out[s].reserve(as.actions[s].size());
        for (const MatchingMatrix& a : as.actions[s]) {
            IVec rt = a.row_totals();
            State base;
            base.x.resize(inst.m);
            for (int i = 0; i < inst.m; ++i) base.x[i] = x.x[i] - rt[i];
            out[s].push_back({matching_reward(inst.reward, a), as.states.index(base)});
        }
    }
    return out;
}

} // namespace

ValueTable backward_induction(const ProblemInstance& inst, std::size_t per_state_cap,
                              std::size_t state_cap) {
    inst.validate();
    if (inst.horizon_T < 1)
        throw std::invalid_argument("backward_induction: horizon_T must be >= 1");
    ActionSpace as = ActionSpace::build(inst, per_state_cap, state_cap);
    TransitionModel tm = TransitionModel::build(inst, Truncation::Drop);
    auto backups = precompute_backups(inst, as);
    std::size_t ns = as.states.size();
    int T = inst.horizon_T;

    ValueTable vt;
    vt.states = as.states;
    vt.values.assign(T + 1, Vec(ns, 0.0));
    vt.best_action.assign(T, std::vector<MatchingMatrix>(ns));
    for (int t = T - 1; t >= 0; --t) {
        Vec W = tm.expected_value_grid(vt.values[t + 1]);
        for (std::size_t s = 0; s < ns; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_a = 0;
            const auto& bs = backups[s];
            for (std::size_t a = 0; a < bs.size(); ++a) {
                double v = bs[a].reward + inst.gamma * W[bs[a].base_idx];
                if (v > best) { // strict: keeps the lexicographically first optimum
                    best = v;
                    best_a = a;
                }
            }
            vt.values[t][s] = best;
            vt.best_action[t][s] = as.actions[s][best_a];
        }
    }
    return vt;
}

QTableExact stationary_value_iteration(const ProblemInstance& inst, double tol,
                                       std::size_t per_state_cap, std::size_t state_cap) {
    inst.validate();
    if (!(inst.gamma < 1.0))
        throw std::invalid_argument("stationary_value_iteration: gamma must be < 1");
    QTableExact qt;
    qt.actions = ActionSpace::build(inst, per_state_cap, state_cap);
    TransitionModel tm = TransitionModel::build(inst);
    auto backups = precompute_backups(inst, qt.actions);
    std::size_t ns = qt.actions.states.size();
    qt.q.resize(ns);
    for (std::size_t s = 0; s < ns; ++s) qt.q[s].assign(qt.actions.actions[s].size(), 0.0);
    qt.value.assign(ns, 0.0);

    const int max_sweeps = 1'000'000;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        Vec W = tm.expected_value_grid(qt.value);
        double residual = 0.0;
        for (std::size_t s = 0; s < ns; ++s) {
            const auto& bs = backups[s];
            double vmax = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < bs.size(); ++a) {
                double nq = bs[a].reward + inst.gamma * W[bs[a].base_idx];
                residual = std::max(residual, std::abs(nq - qt.q[s][a]));
                qt.q[s][a] = nq;
                vmax = std::max(vmax, nq);
            }
            qt.value[s] = vmax;
        }
        if (residual < tol) break;
    }
    qt.greedy.assign(ns, 0);
    for (std::size_t s = 0; s < ns; ++s) {
        const Vec& row = qt.q[s];
        std::size_t best = 0;
        for (std::size_t a = 1; a < row.size(); ++a)
            if (row[a] > row[best]) best = a;
        qt.greedy[s] = static_cast<int>(best);
    }
    return qt;
}

Vec evaluate_policy(const ProblemInstance& inst, const Policy& policy, double tol) {
    inst.validate();
    StateSpace ss(inst.m, inst.demand_limit);
    std::size_t ns = ss.size();
    if (policy.size() != ns)
        throw std::invalid_argument("evaluate_policy: policy must cover every truncated state");
    TransitionModel tm = TransitionModel::build(inst);

    // Net reward and base index per state under the fixed policy. Infeasible
    // actions are penalized and executed truncated, matching the environment.
    Vec reward(ns);
    std::vector<std::size_t> base_idx(ns);
    for (std::size_t s = 0; s < ns; ++s) {
        State x = ss.state(s);
        const MatchingMatrix& a = policy[s];
        reward[s] = matching_reward(inst.reward, a) - demand_penalty(x, a, inst.k1) -
                    capacity_penalty(a, inst.capacities, inst.k2);
        IVec rt = a.row_totals();
        State base;
        base.x.resize(inst.m);
        for (int i = 0; i < inst.m; ++i) base.x[i] = x.x[i] - std::min(rt[i], x.x[i]);
        base_idx[s] = ss.index(base);
    }

    Vec V(ns, 0.0);
    for (;;) {
        Vec W = tm.expected_value_grid(V);
        double residual = 0.0;
        for (std::size_t s = 0; s < ns; ++s) {
            double nv = reward[s] + inst.gamma * W[base_idx[s]];
            residual = std::max(residual, std::abs(nv - V[s]));
            V[s] = nv;
        }
        if (residual < tol) break;
    }
    return V;
}

} // namespace matchrl
