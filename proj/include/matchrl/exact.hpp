#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "matchrl/core.hpp"

namespace matchrl {

// Truncated state grid {0..N_d}^m with mixed-radix indexing.
struct StateSpace {
    int m = 0;
    int demand_limit = 0;

    StateSpace() = default;
    StateSpace(int m_, int limit) : m(m_), demand_limit(limit) {}

    std::size_t size() const {
        std::size_t s = 1;
        for (int i = 0; i < m; ++i) s *= static_cast<std::size_t>(demand_limit + 1);
        return s;
    }
    std::size_t index(const State& s) const {
        std::size_t idx = 0;
        for (int i = 0; i < m; ++i) idx = idx * (demand_limit + 1) + s.x[i];
        return idx;
    }
    State state(std::size_t idx) const {
        State s;
        s.x.assign(m, 0);
        for (int i = m - 1; i >= 0; --i) {
            s.x[i] = static_cast<int>(idx % (demand_limit + 1));
            idx /= demand_limit + 1;
        }
        return s;
    }
};

// Per-state feasible-action enumerations, lexicographic row-major order.
struct ActionSpace {
    StateSpace states;
    std::vector<std::vector<MatchingMatrix>> actions; // [state index]

    static ActionSpace build(const ProblemInstance& inst, std::size_t per_state_cap = 2'000'000,
                             std::size_t state_cap = 5'000'000);

    // Index of `a` in the enumeration for state `s`, or -1.
    int find(std::size_t state_idx, const MatchingMatrix& a) const;
};

// How demand mass that would leave the truncated grid is handled. Clamp folds
// it onto the boundary state, keeping every row a proper distribution — the
// right choice for the stationary solvers that serve as RL oracles. Drop
// ignores those transitions entirely (rows near the boundary sum to < 1),
// which is the truncation the finite-horizon solver uses: trajectories that
// escape the grid contribute nothing to the continuation value.
enum class Truncation { Clamp, Drop };

// Factored next-state distribution over the truncated grid. The joint row for
// a (state, action) pair is the product of the per-type rows.
class TransitionModel {
  public:
    static TransitionModel build(const ProblemInstance& inst,
                                 Truncation trunc = Truncation::Clamp);

    const StateSpace& states() const { return states_; }

    // P(next_i = v | base_i = x_i - rowtot_i).
    double component(int type, int base, int next) const {
        return per_type_[type][base][next];
    }

    // Dense joint probability row over state indices. Intended for tests and
    // small instances only.
    Vec joint_row(const State& x, const MatchingMatrix& a) const;

    // Expected-next-value grid: out[idx(base)] = E[V(next) | base], for every
    // base vector, via per-axis contraction.
    Vec expected_value_grid(const Vec& value) const;

  private:
    StateSpace states_;
    std::vector<std::vector<Vec>> per_type_; // [type][base][next]
};

// Finite-horizon tables: values[t] and best_action[t] for t = 0..T-1 plus the
// terminal zero table at index T (periods are 1-based in reports).
struct ValueTable {
    StateSpace states;
    std::vector<Vec> values;                                // T+1 tables
    std::vector<std::vector<MatchingMatrix>> best_action;   // T tables
};

struct QTableExact {
    ActionSpace actions;
    std::vector<Vec> q;                 // [state][action index]
    Vec value;                          // max over actions
    std::vector<int> greedy;            // argmax action index per state

    double value_of(std::size_t s) const { return value[s]; }
};

// V_t(x) = max_Q [ R o Q + gamma * sum_x' p(x'|x,Q) V_{t+1}(x') ], terminal
// table zero, lexicographically smallest optimal action stored per state.
ValueTable backward_induction(const ProblemInstance& inst,
                              std::size_t per_state_cap = 2'000'000,
                              std::size_t state_cap = 5'000'000);

QTableExact stationary_value_iteration(const ProblemInstance& inst, double tol = 1e-8,
                                       std::size_t per_state_cap = 2'000'000,
                                       std::size_t state_cap = 5'000'000);

// Deterministic stationary policy: one action per state.
using Policy = std::vector<MatchingMatrix>;

Vec evaluate_policy(const ProblemInstance& inst, const Policy& policy, double tol = 1e-8);

} // namespace matchrl
