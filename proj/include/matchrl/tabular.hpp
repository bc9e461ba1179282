#pragma once

#include <utility>
#include <vector>

#include "matchrl/core.hpp"
#include "matchrl/exact.hpp"
#include "matchrl/record.hpp"
#include "matchrl/rng.hpp"

namespace matchrl {

enum class DivergenceKind { SquaredL2, KL };

// Convex divergence h between the learned and prior action distributions.
// The penalty entered into the value-penalty function is g = -h, so that
// maximization penalizes deviation from the prior; `literal_plus_h` restores
// the +h reading for comparison.
struct DivergenceSpec {
    DivergenceKind kind = DivergenceKind::SquaredL2;
    double mu_smoothing = 0.01; // uniform mix applied to mu before KL
    bool literal_plus_h = false;
};

struct BetaSchedule {
    enum class Mode { Fixed, Linear };
    Mode mode = Mode::Fixed;
    double beta = 1.0;  // fixed value
    double kappa = 0.0; // slope for beta_t = kappa * t

    static BetaSchedule fixed(double b) { return {Mode::Fixed, b, 0.0}; }
    static BetaSchedule linear(double k) { return {Mode::Linear, 0.0, k}; }

    // t is the global step index, starting at 1.
    double at(long long t) const {
        return mode == Mode::Fixed ? beta : kappa * static_cast<double>(t);
    }
};

struct LearningConfig {
    double alpha_exponent = 0.85;     // alpha = 1 / (1 + visits)^exponent
    double epsilon_start = 1.0;
    double epsilon_floor = 0.1;
    int epsilon_anneal_episodes = 300; // exponential anneal horizon
    int episode_cap = 3000;
    int step_cap = 500;
    double convergence_threshold = 0.0; // 0 disables early stopping
    int checkpoint_interval = 10;

    double epsilon_at(int episode) const; // episode is 0-based
};

// Tabular estimates over the per-state feasible enumerations.
struct QTable {
    std::vector<Vec> q;               // [state][action index]
    std::vector<std::vector<int>> visits;

    static QTable zeros(const ActionSpace& as);
    double max_q(std::size_t s) const;
    int argmax(std::size_t s) const;
};

// Per-state probability vectors over the feasible enumeration.
struct PriorPolicy {
    std::vector<Vec> rows;
};

// Standard Q-learning update; returns the new estimate.
double q_learning_update(QTable& table, std::size_t s, int a, double r, std::size_t s_next,
                         double alpha, double gamma);

// g(a) for one action: -h(pi(a), mu(a)) (or +h in literal mode).
double penalty_g(const Vec& pi_row, const Vec& mu_row, const DivergenceSpec& spec, int a);

// Aggregate convex divergence h(p, mu): squared L2 distance or KL against
// the smoothed prior. Satisfies h(p,p)=0 (for KL, up to smoothing).
double divergence_h(const Vec& p, const Vec& mu_row, const DivergenceSpec& spec);

// F(pi) = sum_a pi(a) [ (1/beta) g(a) + Q(a) ].
double value_penalty_F(const Vec& q_row, const Vec& pi_row, const Vec& mu_row, double beta,
                       const DivergenceSpec& spec);

// Maximizer of F over the probability simplex and its value. KL uses the
// closed-form soft-max; squared-L2 uses multi-start projected gradient ascent.
std::pair<Vec, double> max_policy_F(const Vec& q_row, const Vec& mu_row, double beta,
                                    const DivergenceSpec& spec);

// Domain knowledge-informed update; returns the new estimate.
double dk_q_update(QTable& table, std::size_t s, int a, double r, std::size_t s_next,
                   double alpha, double gamma, double beta_t, const PriorPolicy& mu,
                   const DivergenceSpec& spec);

// One-hot (optionally smoothed) prior at the single-period optimal action.
PriorPolicy make_prior_policy(const ProblemInstance& inst, const ActionSpace& as,
                              double smoothing = 0.0);

enum class TabularMethod { QL, DKQL };

struct TabularResult {
    QTable table;
    RunRecord record;
};

TabularResult train_tabular(const ProblemInstance& inst, const ActionSpace& as,
                            const LearningConfig& config, TabularMethod method,
                            const BetaSchedule& beta_schedule, const PriorPolicy& prior,
                            const DivergenceSpec& spec, RngStream& rng);

// Mean over all states of max_a Q(s,a); the tabular average-Q metric.
double tabular_average_q(const QTable& table);

} // namespace matchrl
