// Command-line workbench: instance generation, exact oracles, RL training,
// evaluation, method comparison, and the empirical convergence suites.
#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "matchrl/harness.hpp"

namespace {

using namespace matchrl;

constexpr int kExitValidation = 2;
constexpr int kExitTimeout = 3;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text << "\n";
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw std::invalid_argument("cannot write file: " + out_path);
    out << text << "\n";
}

std::string qtable_to_json(const QTable& table, const ActionSpace& as) {
    nlohmann::json j;
    nlohmann::json states = nlohmann::json::array();
    for (std::size_t s = 0; s < table.q.size(); ++s) states.push_back(as.states.state(s).x);
    j["states"] = std::move(states);
    j["q"] = table.q;
    j["visits"] = table.visits;
    return j.dump();
}

int cmd_train(const std::string& method, const std::string& instance_path, std::uint64_t seed,
              int episodes, int steps, double threshold, double kappa, double beta_fixed,
              const std::string& record_path, const std::string& checkpoint_path,
              double wall_cap) {
    if (method != "ql" && method != "dkql" && method != "ddpg" && method != "dkddpg")
        throw std::invalid_argument("unknown method: " + method);
    ProblemInstance inst = instance_from_json(slurp(instance_path));
    BetaSchedule beta = kappa > 0.0 ? BetaSchedule::linear(kappa) : BetaSchedule::fixed(beta_fixed);
    RngStream rng(seed);
    std::string manifest = "method=" + method + " seed=" + std::to_string(seed) +
                           " instance_hash=" + std::to_string(instance_hash(inst));
    RunRecord record;
    std::string checkpoint;
    if (method == "ql" || method == "dkql") {
        ActionSpace as = ActionSpace::build(inst);
        PriorPolicy prior = make_prior_policy(inst, as, 0.01);
        DivergenceSpec spec;
        spec.kind = DivergenceKind::KL;
        LearningConfig lc;
        lc.episode_cap = episodes;
        lc.step_cap = steps;
        lc.convergence_threshold = threshold;
        TabularResult r = train_tabular(inst, as, lc,
                                        method == "dkql" ? TabularMethod::DKQL : TabularMethod::QL,
                                        beta, prior, spec, rng);
        record = std::move(r.record);
        checkpoint = qtable_to_json(r.table, as);
    } else {
        DeepConfig dc;
        dc.episode_cap = episodes;
        dc.step_cap = steps;
        dc.convergence_threshold = threshold;
        dc.wall_clock_cap_s = wall_cap;
        dc.exploration.anneal_episodes = inst.m <= 5 ? 300 : 1000;
        DeepResult r = train_agent(inst, dc,
                                   method == "dkddpg" ? DeepMethod::DKDDPG : DeepMethod::DDPG,
                                   beta, DivergenceSpec{}, rng);
        record = std::move(r.record);
        checkpoint = agent_to_json(r.agent, beta, dc.exploration, seed,
                                   std::to_string(instance_hash(inst)));
    }
    if (!record_path.empty()) record.write_csv(record_path, manifest);
    if (!checkpoint_path.empty()) emit(checkpoint, checkpoint_path);
    std::cout << "converged=" << (record.converged ? 1 : 0)
              << " episodes=" << record.rows.size() << "\n";
    return record.timed_out ? kExitTimeout : 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& instance_path,
                 std::uint64_t seed, int horizon) {
    ProblemInstance inst = instance_from_json(slurp(instance_path));
    nlohmann::json j = nlohmann::json::parse(slurp(checkpoint_path));
    double total = 0.0;
    if (j.contains("actor")) {
        AgentPair agent = agent_from_json(j.dump());
        total = evaluate_deep(inst, agent, horizon, seed);
    } else {
        ActionSpace as = ActionSpace::build(inst);
        QTable table = QTable::zeros(as);
        table.q = j.at("q").get<std::vector<Vec>>();
        if (table.q.size() != as.actions.size())
            throw std::invalid_argument("checkpoint does not match instance shape");
        total = evaluate_tabular(inst, as, table, horizon, seed);
    }
    std::cout << format_double(total) << "\n";
    return 0;
}

int cmd_verify(int episodes, int seeds_count, double beta_fixed, double kappa) {
    std::vector<std::uint64_t> seeds;
    for (int k = 1; k <= seeds_count; ++k) seeds.push_back(static_cast<std::uint64_t>(k));
    bool ok = true;
    {
        auto trials = run_convergence_suite(BetaSchedule::fixed(beta_fixed), seeds, episodes);
        int passed = 0;
        for (const auto& t : trials) {
            std::cout << "fixed-beta seed=" << t.seed
                      << " rel_distance=" << format_double(t.rel_distance) << "\n";
            if (t.rel_distance < 0.05) ++passed;
        }
        bool suite_ok = passed >= static_cast<int>(seeds.size()) - 1;
        std::cout << "fixed-beta suite: " << (suite_ok ? "pass" : "FAIL") << " (" << passed << "/"
                  << seeds.size() << ")\n";
        ok = ok && suite_ok;
    }
    {
        auto trials = run_convergence_suite(BetaSchedule::linear(kappa), seeds, episodes);
        int passed = 0;
        for (const auto& t : trials) {
            std::cout << "scheduled-beta seed=" << t.seed
                      << " rel_distance=" << format_double(t.rel_distance)
                      << " at_20pct=" << format_double(t.rel_distance_early) << "\n";
            if (t.rel_distance < 0.05 && t.rel_distance <= t.rel_distance_early) ++passed;
        }
        bool suite_ok = passed >= static_cast<int>(seeds.size()) - 1;
        std::cout << "scheduled-beta suite: " << (suite_ok ? "pass" : "FAIL") << " (" << passed
                  << "/" << seeds.size() << ")\n";
        ok = ok && suite_ok;
    }
    return ok ? 0 : kExitValidation;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"demand-capacity matching workbench"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "emit a random instance as JSON");
    int gen_m = 2;
    std::uint64_t gen_seed = 1;
    std::string gen_out;
    gen->add_option("--m", gen_m, "demand types (n = m)");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output path (default stdout)");

    auto* oracle = app.add_subcommand("oracle", "exact values and actions for an instance");
    std::string oracle_instance, oracle_out;
    oracle->add_option("--instance", oracle_instance, "instance JSON")->required();
    oracle->add_option("--out", oracle_out, "output path (default stdout)");

    auto* train = app.add_subcommand("train", "train one method on one instance");
    std::string tr_method, tr_instance, tr_record, tr_checkpoint;
    std::uint64_t tr_seed = 1;
    int tr_episodes = 3000, tr_steps = 500;
    double tr_threshold = 0.02, tr_kappa = 0.0, tr_beta = 1.0, tr_wall = 0.0;
    train->add_option("--method", tr_method, "ql|dkql|ddpg|dkddpg")->required();
    train->add_option("--instance", tr_instance, "instance JSON")->required();
    train->add_option("--seed", tr_seed, "training seed");
    train->add_option("--episodes", tr_episodes, "episode cap");
    train->add_option("--steps", tr_steps, "steps per episode");
    train->add_option("--threshold", tr_threshold, "convergence threshold (0 disables)");
    train->add_option("--kappa", tr_kappa, "beta slope; 0 selects the fixed schedule");
    train->add_option("--beta", tr_beta, "fixed beta (when kappa is 0)");
    train->add_option("--wall-cap", tr_wall, "wall-clock cap in seconds (0 unlimited)");
    train->add_option("--record", tr_record, "per-episode CSV output path");
    train->add_option("--checkpoint", tr_checkpoint, "checkpoint JSON output path");

    auto* eval = app.add_subcommand("evaluate", "greedy rollout of a trained checkpoint");
    std::string ev_checkpoint, ev_instance;
    std::uint64_t ev_seed = 1;
    int ev_horizon = 500;
    eval->add_option("--checkpoint", ev_checkpoint, "checkpoint JSON")->required();
    eval->add_option("--instance", ev_instance, "instance JSON")->required();
    eval->add_option("--seed", ev_seed, "evaluation seed");
    eval->add_option("--horizon", ev_horizon, "rollout length");

    auto* compare = app.add_subcommand("compare", "run a method comparison from a config file");
    std::string cmp_config;
    compare->add_option("--config", cmp_config, "experiment config JSON")->required();

    auto* verify = app.add_subcommand("verify", "empirical convergence suites");
    int vf_episodes = 3000, vf_seeds = 5;
    double vf_beta = 10.0, vf_kappa = 0.05;
    verify->add_option("--episodes", vf_episodes, "episodes per trial");
    verify->add_option("--seeds", vf_seeds, "number of seeds");
    verify->add_option("--beta", vf_beta, "fixed beta for the first suite");
    verify->add_option("--kappa", vf_kappa, "beta slope for the second suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e); // prints help or the error message
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (gen->parsed()) {
            emit(instance_to_json(matchrl::generate_instance(gen_m, gen_seed)), gen_out);
            return 0;
        }
        if (oracle->parsed()) {
            emit(matchrl::oracle_dump(matchrl::instance_from_json(slurp(oracle_instance))),
                 oracle_out);
            return 0;
        }
        if (train->parsed())
            return cmd_train(tr_method, tr_instance, tr_seed, tr_episodes, tr_steps, tr_threshold,
                             tr_kappa, tr_beta, tr_record, tr_checkpoint, tr_wall);
        if (eval->parsed()) return cmd_evaluate(ev_checkpoint, ev_instance, ev_seed, ev_horizon);
        if (compare->parsed()) {
            matchrl::ExperimentConfig cfg = matchrl::experiment_config_from_json(slurp(cmp_config));
            matchrl::ComparisonReport report = matchrl::run_comparison(cfg);
            std::cout << "rows=" << report.rows.size() << " series=" << report.series_files.size()
                      << "\n";
            return report.any_timed_out ? kExitTimeout : 0;
        }
        if (verify->parsed()) return cmd_verify(vf_episodes, vf_seeds, vf_beta, vf_kappa);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return 0;
}
