#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matchrl/core.hpp"
#include "matchrl/ddpg.hpp"
#include "matchrl/exact.hpp"
#include "matchrl/record.hpp"
#include "matchrl/tabular.hpp"

namespace matchrl {

struct ExperimentConfig {
    std::string instance_path;       // empty: use the generator
    int generator_m = 2;
    std::uint64_t generator_seed = 1;
    std::vector<std::string> methods = {"dkddpg", "ddpg"}; // ql|dkql|ddpg|dkddpg|exact
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    int episode_cap = 3000;
    int step_cap = 500;
    double convergence_threshold = 0.02; // 0.03 for large instances
    int eval_horizon = 500;
    double wall_clock_cap_s = 0.0; // 0 = unlimited
    double kappa = 0.01;           // DK beta slope
    std::string output_dir = ".";
    int workers = 0; // 0 = hardware concurrency

    void validate() const;
};

std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);

// Random square instance: uniform demand pmfs with per-type upper limits drawn
// from {0..20}, capacities from {0..20}, horizontal rewards with prize 10 and
// distances uniform in [0,8]. Fully determined by (m, seed).
ProblemInstance generate_instance(int m, std::uint64_t seed);

std::string instance_to_json(const ProblemInstance& inst);
// Rejects pmfs whose sum deviates from 1 by more than 1e-6.
ProblemInstance instance_from_json(const std::string& text);

std::uint64_t instance_hash(const ProblemInstance& inst);

// Exact dump for golden-file tests: finite horizon (per-period values and
// actions) when horizon_T >= 1, otherwise the stationary fixed point.
std::string oracle_dump(const ProblemInstance& inst);

// Mean over all states of max_a Q(s,a).
double average_q_metric(const QTable& table);
// Mean critic value at the actor's action; seeded sample past the cap.
double average_q_metric(const AgentPair& agent, const ProblemInstance& inst,
                        std::size_t sample_cap = 512);
// The same metric computed from the exact Q*.
double average_q_metric(const QTableExact& exact);

// Greedy noise-free rollout; undiscounted cumulative net reward.
double evaluate_tabular(const ProblemInstance& inst, const ActionSpace& as, const QTable& table,
                        int horizon, std::uint64_t seed);
double evaluate_deep(const ProblemInstance& inst, const AgentPair& agent, int horizon,
                     std::uint64_t seed);
double evaluate_exact(const ProblemInstance& inst, const QTableExact& exact, int horizon,
                      std::uint64_t seed);

// Small fixed 2x2 instance (demand support {0,1,2}, capacities [2,2]) used by
// the empirical convergence suites.
ProblemInstance make_verification_instance();

struct ConvergenceTrial {
    std::uint64_t seed = 0;
    double rel_distance = 0.0;       // max-norm distance to Q*, relative
    double rel_distance_early = 0.0; // same, measured at 20% of training
};

// Trains DKQL on the verification instance per seed (full exploration, no
// early stop) and reports the relative max-norm distance to the exact Q*.
std::vector<ConvergenceTrial> run_convergence_suite(const BetaSchedule& beta,
                                                    const std::vector<std::uint64_t>& seeds,
                                                    int episode_cap);

struct ComparisonRow {
    std::string method;
    std::string instance_label;
    std::uint64_t seed = 0;
    bool converged = false;
    int episodes = 0;
    double time_s = 0.0;
    double avg_q = 0.0;
    double pct_diff_vs_exact = 0.0; // (method - exact)/exact * 100; 0 when exact unavailable
    double pct_vs_ddpg = 0.0;       // dkddpg rows: (dk - ddpg)/ddpg * 100 at the same seed
    bool timed_out = false;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    bool any_timed_out = false;
    std::vector<std::string> series_files; // one per (method, seed) cell
};

// Runs every (method x seed) cell in a worker pool, writes comparison.csv and
// per-cell series CSVs under output_dir. Rows are sorted by (method, seed)
// before writing; every file header carries the config manifest hash.
ComparisonReport run_comparison(const ExperimentConfig& cfg);

} // namespace matchrl
