#include "matchrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace matchrl {

void ExperimentConfig::validate() const {
    if (generator_m < 1 && instance_path.empty())
        throw std::invalid_argument("config: generator_m must be >= 1");
    if (!(convergence_threshold > 0.0 && convergence_threshold < 1.0))
        throw std::invalid_argument("config: convergence_threshold must be in (0,1)");
    if (episode_cap < 1 || step_cap < 1 || eval_horizon < 1)
        throw std::invalid_argument("config: caps must be >= 1");
    if (methods.empty()) throw std::invalid_argument("config: no methods");
    for (const std::string& mth : methods)
        if (mth != "ql" && mth != "dkql" && mth != "ddpg" && mth != "dkddpg" && mth != "exact")
            throw std::invalid_argument("config: unknown method " + mth);
    if (seeds.empty()) throw std::invalid_argument("config: no seeds");
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["instance_path"] = cfg.instance_path;
    j["generator_m"] = cfg.generator_m;
    j["generator_seed"] = cfg.generator_seed;
    j["methods"] = cfg.methods;
    j["seeds"] = cfg.seeds;
    j["episode_cap"] = cfg.episode_cap;
    j["step_cap"] = cfg.step_cap;
    j["convergence_threshold"] = cfg.convergence_threshold;
    j["eval_horizon"] = cfg.eval_horizon;
    j["wall_clock_cap_s"] = cfg.wall_clock_cap_s;
    j["kappa"] = cfg.kappa;
    j["output_dir"] = cfg.output_dir;
    j["workers"] = cfg.workers;
    return j.dump();
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ExperimentConfig cfg;
    cfg.instance_path = j.value("instance_path", std::string());
    cfg.generator_m = j.value("generator_m", 2);
    cfg.generator_seed = j.value("generator_seed", std::uint64_t{1});
    if (j.contains("methods")) cfg.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    cfg.episode_cap = j.value("episode_cap", 3000);
    cfg.step_cap = j.value("step_cap", 500);
    cfg.convergence_threshold = j.value("convergence_threshold", 0.02);
    cfg.eval_horizon = j.value("eval_horizon", 500);
    cfg.wall_clock_cap_s = j.value("wall_clock_cap_s", 0.0);
    cfg.kappa = j.value("kappa", 0.01);
    cfg.output_dir = j.value("output_dir", std::string("."));
    cfg.workers = j.value("workers", 0);
    cfg.validate();
    return cfg;
}

ProblemInstance generate_instance(int m, std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("generate_instance: m must be >= 1");
    RngStream rng(seed);
    ProblemInstance inst;
    inst.m = m;
    inst.n = m;
    inst.horizon_T = 0;
    inst.gamma = 0.9;
    inst.seed = seed;
    int max_u = 0;
    for (int i = 0; i < m; ++i) {
        int u = rng.uniform_int(21);
        max_u = std::max(max_u, u);
        inst.demand_pmfs.emplace_back(static_cast<std::size_t>(u) + 1,
                                      1.0 / static_cast<double>(u + 1));
    }
    int max_c = 0;
    inst.capacities.resize(m);
    for (int j = 0; j < m; ++j) {
        inst.capacities[j] = rng.uniform_int(21);
        max_c = std::max(max_c, inst.capacities[j]);
    }
    Vec delta(static_cast<std::size_t>(m) * m);
    for (double& d : delta) d = rng.uniform() * 8.0;
    inst.reward = build_horizontal_reward(10.0, delta, m, m);
    inst.k1 = inst.k2 = default_penalty_constant(inst.reward);
    inst.demand_limit = 2 * max_u + max_c;
    inst.validate();
    return inst;
}

std::string instance_to_json(const ProblemInstance& inst) {
    nlohmann::json j;
    j["m"] = inst.m;
    j["n"] = inst.n;
    j["horizon_T"] = inst.horizon_T;
    j["gamma"] = inst.gamma;
    j["capacities"] = inst.capacities;
    j["demand_pmfs"] = inst.demand_pmfs;
    j["reward"] = inst.reward;
    j["k1"] = inst.k1;
    j["k2"] = inst.k2;
    j["N_d"] = inst.demand_limit;
    j["seed"] = inst.seed;
    return j.dump(2);
}

ProblemInstance instance_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ProblemInstance inst;
    inst.m = j.at("m").get<int>();
    inst.n = j.at("n").get<int>();
    inst.horizon_T = j.value("horizon_T", 0);
    inst.gamma = j.at("gamma").get<double>();
    inst.capacities = j.at("capacities").get<IVec>();
    inst.demand_pmfs = j.at("demand_pmfs").get<std::vector<Vec>>();
    inst.reward = j.at("reward").get<Vec>();
    inst.k1 = j.at("k1").get<double>();
    inst.k2 = j.at("k2").get<double>();
    inst.demand_limit = j.at("N_d").get<int>();
    inst.seed = j.value("seed", std::uint64_t{0});
    inst.validate(1e-6);
    return inst;
}

std::uint64_t instance_hash(const ProblemInstance& inst) {
    return manifest_hash(instance_to_json(inst));
}

namespace {

nlohmann::json matrix_json(const MatchingMatrix& q) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < q.rows; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < q.cols; ++j) row.push_back(q.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

std::string oracle_dump(const ProblemInstance& inst) {
    nlohmann::json j;
    StateSpace ss(inst.m, inst.demand_limit);
    nlohmann::json states = nlohmann::json::array();
    for (std::size_t s = 0; s < ss.size(); ++s) states.push_back(ss.state(s).x);
    j["states"] = std::move(states);
    if (inst.horizon_T >= 1) {
        ValueTable vt = backward_induction(inst);
        j["regime"] = "finite_horizon";
        nlohmann::json values = nlohmann::json::array();
        nlohmann::json actions = nlohmann::json::array();
        for (int t = 0; t < inst.horizon_T; ++t) {
            values.push_back(vt.values[t]);
            nlohmann::json acts = nlohmann::json::array();
            for (const MatchingMatrix& a : vt.best_action[t]) acts.push_back(matrix_json(a));
            actions.push_back(std::move(acts));
        }
        j["values"] = std::move(values);
        j["actions"] = std::move(actions);
    } else {
        QTableExact ex = stationary_value_iteration(inst);
        j["regime"] = "stationary";
        j["values"] = ex.value;
        nlohmann::json acts = nlohmann::json::array();
        for (std::size_t s = 0; s < ex.value.size(); ++s)
            acts.push_back(matrix_json(ex.actions.actions[s][ex.greedy[s]]));
        j["actions"] = std::move(acts);
    }
    return j.dump(2);
}

double average_q_metric(const QTable& table) { return tabular_average_q(table); }

double average_q_metric(const AgentPair& agent, const ProblemInstance& inst,
                        std::size_t sample_cap) {
    return deep_average_q(agent, inst, sample_cap);
}

double average_q_metric(const QTableExact& exact) {
    double sum = 0.0;
    for (double v : exact.value) sum += v;
    return sum / static_cast<double>(exact.value.size());
}

namespace {

State random_state(const ProblemInstance& inst, RngStream& rng) {
    State s;
    s.x.resize(inst.m);
    for (int i = 0; i < inst.m; ++i) s.x[i] = rng.uniform_int(inst.demand_limit + 1);
    return s;
}

} // namespace

double evaluate_tabular(const ProblemInstance& inst, const ActionSpace& as, const QTable& table,
                        int horizon, std::uint64_t seed) {
    RngStream rng(seed);
    State x = random_state(inst, rng);
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
        std::size_t sidx = as.states.index(x);
        const MatchingMatrix& a = as.actions[sidx][table.argmax(sidx)];
        StepOutcome o = step(inst, x, a, rng);
        total += o.net_reward;
        x = o.next_state;
    }
    return total;
}

double evaluate_deep(const ProblemInstance& inst, const AgentPair& agent, int horizon,
                     std::uint64_t seed) {
    if (agent.actor.input_size() != inst.m ||
        agent.actor.output_size() != inst.m * inst.n)
        throw std::invalid_argument("evaluate_deep: agent shape does not match instance");
    RngStream rng(seed);
    State x = random_state(inst, rng);
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
        Vec probs = forward(agent.actor, normalize_state(x, inst.demand_limit));
        MatchingMatrix a = transform_action(probs, x, inst.n);
        StepOutcome o = step(inst, x, a, rng);
        total += o.net_reward;
        x = o.next_state;
    }
    return total;
}

double evaluate_exact(const ProblemInstance& inst, const QTableExact& exact, int horizon,
                      std::uint64_t seed) {
    RngStream rng(seed);
    State x = random_state(inst, rng);
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
        std::size_t sidx = exact.actions.states.index(x);
        const MatchingMatrix& a = exact.actions.actions[sidx][exact.greedy[sidx]];
        StepOutcome o = step(inst, x, a, rng);
        total += o.net_reward;
        x = o.next_state;
    }
    return total;
}

ProblemInstance make_verification_instance() {
    ProblemInstance inst;
    inst.m = inst.n = 2;
    inst.horizon_T = 0;
    inst.gamma = 0.9;
    inst.capacities = {2, 2};
    inst.demand_pmfs = {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
    inst.reward = build_horizontal_reward(10.0, {0, 3, 5, 2}, 2, 2);
    inst.k1 = inst.k2 = default_penalty_constant(inst.reward);
    inst.demand_limit = 6;
    inst.validate();
    return inst;
}

namespace {

double rel_max_norm_distance(const QTable& table, const QTableExact& exact) {
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < exact.q.size(); ++s) {
        for (std::size_t a = 0; a < exact.q[s].size(); ++a) {
            num = std::max(num, std::abs(table.q[s][a] - exact.q[s][a]));
            den = std::max(den, std::abs(exact.q[s][a]));
        }
    }
    return den > 0.0 ? num / den : num;
}

} // namespace

std::vector<ConvergenceTrial> run_convergence_suite(const BetaSchedule& beta,
                                                    const std::vector<std::uint64_t>& seeds,
                                                    int episode_cap) {
    ProblemInstance inst = make_verification_instance();
    ActionSpace as = ActionSpace::build(inst);
    QTableExact exact = stationary_value_iteration(inst);
    PriorPolicy prior = make_prior_policy(inst, as, 0.01);
    DivergenceSpec spec;
    spec.kind = DivergenceKind::KL;
    LearningConfig lc;
    lc.episode_cap = episode_cap;
    lc.epsilon_start = lc.epsilon_floor = 1.0; // full exploration, off-policy
    lc.convergence_threshold = 0.0;

    std::vector<ConvergenceTrial> trials(seeds.size());
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            std::size_t k = next.fetch_add(1);
            if (k >= seeds.size()) return;
            ConvergenceTrial& t = trials[k];
            t.seed = seeds[k];
            // The 20% snapshot replays the identical stream prefix.
            LearningConfig early = lc;
            early.episode_cap = std::max(1, episode_cap / 5);
            {
                RngStream rng(seeds[k]);
                TabularResult r =
                    train_tabular(inst, as, early, TabularMethod::DKQL, beta, prior, spec, rng);
                t.rel_distance_early = rel_max_norm_distance(r.table, exact);
            }
            RngStream rng(seeds[k]);
            TabularResult r =
                train_tabular(inst, as, lc, TabularMethod::DKQL, beta, prior, spec, rng);
            t.rel_distance = rel_max_norm_distance(r.table, exact);
        }
    };
    unsigned nw = std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                                     static_cast<unsigned>(seeds.size()));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w + 1 < nw; ++w) pool.emplace_back(work);
    work();
    for (std::thread& th : pool) th.join();
    return trials;
}

namespace {

struct CellResult {
    ComparisonRow row;
    RunRecord record;
    bool has_record = false;
};

bool is_tabular(const std::string& mth) { return mth == "ql" || mth == "dkql"; }
bool is_deep(const std::string& mth) { return mth == "ddpg" || mth == "dkddpg"; }

// Exact baselines are only attempted when the full tabulation stays small.
bool exact_tractable(const ProblemInstance& inst) {
    StateSpace ss(inst.m, inst.demand_limit);
    if (inst.m > 3 || ss.size() > 20'000) return false;
    State full;
    full.x.assign(inst.m, inst.demand_limit);
    try {
        auto acts = enumerate_feasible_actions(full, inst.capacities, 20'000);
        return ss.size() * acts.size() <= 2'000'000;
    } catch (const std::length_error&) {
        return false;
    }
}

} // namespace

ComparisonReport run_comparison(const ExperimentConfig& cfg) {
    cfg.validate();
    ProblemInstance inst;
    std::string label;
    if (!cfg.instance_path.empty()) {
        std::ifstream in(cfg.instance_path);
        if (!in) throw std::invalid_argument("cannot open instance file: " + cfg.instance_path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        inst = instance_from_json(text);
        label = cfg.instance_path;
    } else {
        inst = generate_instance(cfg.generator_m, cfg.generator_seed);
        label = "gen_m" + std::to_string(cfg.generator_m) + "_s" +
                std::to_string(cfg.generator_seed);
    }

    bool want_exact = false;
    bool want_tabular = false;
    for (const std::string& mth : cfg.methods) {
        if (mth == "exact") want_exact = true;
        if (is_tabular(mth)) want_tabular = true;
    }
    bool tractable = exact_tractable(inst);

    QTableExact exact;
    bool have_exact = false;
    if (tractable) {
        exact = stationary_value_iteration(inst);
        have_exact = true;
    } else if (want_exact) {
        throw std::invalid_argument("exact method requested on an intractable instance");
    }
    double exact_avg_q = have_exact ? average_q_metric(exact) : 0.0;

    ActionSpace as;
    PriorPolicy prior;
    if (want_tabular) {
        as = ActionSpace::build(inst);
        prior = make_prior_policy(inst, as, 0.01);
    }

    std::string manifest =
        "config_hash=" + std::to_string(manifest_hash(experiment_config_to_json(cfg))) +
        " instance_hash=" + std::to_string(instance_hash(inst));

    struct Cell {
        std::string method;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const std::string& mth : cfg.methods) {
        if (mth == "exact") {
            cells.push_back({mth, 0});
            continue;
        }
        for (std::uint64_t s : cfg.seeds) cells.push_back({mth, s});
    }

    std::vector<CellResult> results(cells.size());
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            std::size_t k = next.fetch_add(1);
            if (k >= cells.size()) return;
            const Cell& cell = cells[k];
            CellResult& out = results[k];
            out.row.method = cell.method;
            out.row.instance_label = label;
            out.row.seed = cell.seed;
            if (cell.method == "exact") {
                out.row.converged = true;
                out.row.avg_q = exact_avg_q;
                out.row.pct_diff_vs_exact = 0.0;
                continue;
            }
            RngStream rng(cell.seed);
            if (is_tabular(cell.method)) {
                LearningConfig lc;
                lc.episode_cap = cfg.episode_cap;
                lc.step_cap = cfg.step_cap;
                lc.convergence_threshold = cfg.convergence_threshold;
                TabularMethod mth =
                    cell.method == "dkql" ? TabularMethod::DKQL : TabularMethod::QL;
                BetaSchedule beta = mth == TabularMethod::DKQL
                                        ? BetaSchedule::linear(cfg.kappa)
                                        : BetaSchedule::fixed(1e12);
                DivergenceSpec spec;
                spec.kind = DivergenceKind::KL;
                TabularResult r =
                    train_tabular(inst, as, lc, mth, beta, prior, spec, rng);
                out.row.avg_q = tabular_average_q(r.table);
                out.record = std::move(r.record);
            } else {
                DeepConfig dc;
                dc.episode_cap = cfg.episode_cap;
                dc.step_cap = cfg.step_cap;
                dc.convergence_threshold = cfg.convergence_threshold;
                dc.wall_clock_cap_s = cfg.wall_clock_cap_s;
                dc.exploration.anneal_episodes = inst.m <= 5 ? 300 : 1000;
                DeepMethod mth =
                    cell.method == "dkddpg" ? DeepMethod::DKDDPG : DeepMethod::DDPG;
                DeepResult r = train_agent(inst, dc, mth, BetaSchedule::linear(cfg.kappa),
                                           DivergenceSpec{}, rng);
                out.row.avg_q = deep_average_q(r.agent, inst, dc.avg_q_sample_cap);
                out.record = std::move(r.record);
            }
            out.has_record = true;
            out.row.converged = out.record.converged;
            out.row.episodes = out.record.converged
                                   ? out.record.episodes_to_convergence
                                   : static_cast<int>(out.record.rows.size());
            out.row.time_s = out.record.converged
                                 ? out.record.time_to_convergence_s
                                 : (out.record.rows.empty()
                                        ? 0.0
                                        : static_cast<double>(out.record.rows.back().wall_ms) /
                                              1000.0);
            out.row.timed_out = out.record.timed_out;
            if (have_exact && exact_avg_q != 0.0)
                out.row.pct_diff_vs_exact = (out.row.avg_q - exact_avg_q) / exact_avg_q * 100.0;
        }
    };
    unsigned nw = cfg.workers > 0 ? static_cast<unsigned>(cfg.workers)
                                  : std::max(1u, std::thread::hardware_concurrency());
    nw = std::min<unsigned>(nw, static_cast<unsigned>(cells.size()));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w + 1 < nw; ++w) pool.emplace_back(work);
    work();
    for (std::thread& t : pool) t.join();

    ComparisonReport report;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        report.rows.push_back(results[k].row);
        report.any_timed_out = report.any_timed_out || results[k].row.timed_out;
        if (results[k].has_record) {
            std::string path = cfg.output_dir + "/series_" + cells[k].method + "_seed" +
                               std::to_string(cells[k].seed) + ".csv";
            results[k].record.write_csv(path, manifest);
            report.series_files.push_back(path);
        }
    }
    std::sort(report.rows.begin(), report.rows.end(),
              [](const ComparisonRow& a, const ComparisonRow& b) {
                  if (a.method != b.method) return a.method < b.method;
                  return a.seed < b.seed;
              });
    for (ComparisonRow& r : report.rows) {
        if (r.method != "dkddpg") continue;
        for (const ComparisonRow& base : report.rows)
            if (base.method == "ddpg" && base.seed == r.seed && base.avg_q != 0.0)
                r.pct_vs_ddpg = (r.avg_q - base.avg_q) / base.avg_q * 100.0;
    }

    std::ofstream out(cfg.output_dir + "/comparison.csv");
    out << "# manifest=" << manifest << "\n";
    out << "method,instance,seed,converged,episodes,time_s,avg_q,pct_diff_vs_exact,"
           "pct_vs_ddpg,timed_out\n";
    for (const ComparisonRow& r : report.rows) {
        out << r.method << ',' << r.instance_label << ',' << r.seed << ','
            << (r.converged ? 1 : 0) << ',' << r.episodes << ',' << format_double(r.time_s)
            << ',' << format_double(r.avg_q) << ',' << format_double(r.pct_diff_vs_exact) << ','
            << format_double(r.pct_vs_ddpg) << ',' << (r.timed_out ? 1 : 0) << "\n";
    }
    return report;
}

} // namespace matchrl
