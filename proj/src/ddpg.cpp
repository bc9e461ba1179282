#include "matchrl/ddpg.hpp"

#include "matchrl/exact.hpp"
#include "matchrl/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

namespace matchrl {

void ReplayBuffer::push(Experience e) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(e));
    } else {
        data_[head_] = std::move(e);
        head_ = (head_ + 1) % capacity_;
    }
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t n, RngStream& rng) const {
    std::vector<const Experience*> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k)
        out.push_back(&data_[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(data_.size())))]);
    return out;
}

double ExplorationSchedule::epsilon(int episode) const {
    if (anneal_episodes <= 0 || eps_start <= eps_floor) return eps_floor;
    double ratio = eps_floor / eps_start;
    double e = eps_start * std::pow(ratio, static_cast<double>(episode) /
                                               static_cast<double>(anneal_episodes));
    return std::max(eps_floor, e);
}

AgentPair make_agent(const ProblemInstance& inst, double actor_lr, double critic_lr, double tau,
                     RngStream& rng) {
    int s_dim = inst.m;
    int a_dim = inst.m * inst.n;
    AgentPair ag;
    ag.actor = init_network({s_dim, 50, 200, 100, a_dim},
                            {Activation::ReLU, Activation::ReLU, Activation::ReLU,
                             Activation::Softmax},
                            0.003, rng);
    ag.critic = init_network({s_dim + a_dim, 50, 100, 200, 1},
                             {Activation::ReLU, Activation::ReLU, Activation::Linear,
                              Activation::Linear},
                             0.003, rng);
    ag.target_actor = ag.actor;
    ag.target_critic = ag.critic;
    ag.actor_opt = OptimizerState::make(OptimizerKind::Adam, actor_lr, ag.actor);
    ag.critic_opt = OptimizerState::make(OptimizerKind::Adam, critic_lr, ag.critic);
    ag.tau = tau;
    return ag;
}

MatchingMatrix transform_action(const Vec& probs, const State& x, int n) {
    int m = static_cast<int>(x.x.size());
    if (probs.size() != static_cast<std::size_t>(m) * n)
        throw std::invalid_argument("transform_action: probability vector must be m*n");
    for (double p : probs)
        if (p < 0.0) throw std::invalid_argument("transform_action: negative probability");
    MatchingMatrix Q(m, n);
    std::vector<double> raw(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        double rowsum = 0.0;
        for (int j = 0; j < n; ++j) rowsum += probs[static_cast<std::size_t>(i) * n + j];
        if (rowsum <= 0.0) continue; // zero row: no matching for this type
        for (int j = 0; j < n; ++j) {
            double v = probs[static_cast<std::size_t>(i) * n + j] / rowsum *
                       static_cast<double>(x.x[i]);
            raw[static_cast<std::size_t>(i) * n + j] = v;
            Q.at(i, j) = static_cast<int>(std::floor(v + 0.5)); // half-up
        }
        // Rounding can exceed x_i by at most n/2; shave the cells whose
        // rounding inflated them the most.
        int rowtot = 0;
        for (int j = 0; j < n; ++j) rowtot += Q.at(i, j);
        while (rowtot > x.x[i]) {
            int best_j = -1;
            double best_res = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < n; ++j) {
                if (Q.at(i, j) <= 0) continue;
                double res = Q.at(i, j) - raw[static_cast<std::size_t>(i) * n + j];
                if (res > best_res) {
                    best_res = res;
                    best_j = j;
                }
            }
            Q.at(i, best_j)--;
            --rowtot;
        }
    }
    return Q;
}

Vec normalize_state(const State& x, int demand_limit) {
    Vec s(x.x.size());
    double d = demand_limit > 0 ? static_cast<double>(demand_limit) : 1.0;
    for (std::size_t i = 0; i < x.x.size(); ++i) s[i] = static_cast<double>(x.x[i]) / d;
    return s;
}

std::pair<Vec, MatchingMatrix> select_action(const AgentPair& agent, const ProblemInstance& inst,
                                             const State& x, const ExplorationSchedule& schedule,
                                             int episode, RngStream& rng) {
    Vec probs = forward(agent.actor, normalize_state(x, inst.demand_limit));
    double u = rng.uniform();
    if (u < schedule.epsilon(episode)) {
        double sum = 0.0;
        for (double& p : probs) {
            p = std::max(0.0, p + schedule.noise_sigma * rng.gaussian());
            sum += p;
        }
        if (sum > 0.0)
            for (double& p : probs) p /= sum;
        else
            std::fill(probs.begin(), probs.end(), 1.0 / static_cast<double>(probs.size()));
    }
    MatchingMatrix Q = transform_action(probs, x, inst.n);
    return {std::move(probs), std::move(Q)};
}

Vec SinglePeriodPrior::operator()(const IVec& x_raw) {
    std::string key(reinterpret_cast<const char*>(x_raw.data()), x_raw.size() * sizeof(int));
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    State x{x_raw};
    MatchingMatrix opt = solve_single_period_any(x, inst_.capacities, inst_.reward, inst_.m,
                                                 inst_.n);
    Vec prior(static_cast<std::size_t>(inst_.m) * inst_.n, 0.0);
    for (int i = 0; i < inst_.m; ++i) {
        if (x_raw[i] <= 0) continue;
        for (int j = 0; j < inst_.n; ++j)
            prior[static_cast<std::size_t>(i) * inst_.n + j] =
                static_cast<double>(opt.at(i, j)) / static_cast<double>(x_raw[i]);
    }
    cache_.emplace(std::move(key), prior);
    return prior;
}

Vec compute_dk_target(const std::vector<const Experience*>& batch, const AgentPair& agent,
                      double gamma, double beta, const DeepPriorFn& prior,
                      const DivergenceSpec& spec) {
    if (!(beta > 0.0)) throw std::invalid_argument("compute_dk_target: beta must be > 0");
    Vec y(batch.size());
    double sign = spec.literal_plus_h ? 1.0 : -1.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        const Experience& e = *batch[k];
        Vec a_plus = forward(agent.target_actor, e.s2);
        Vec qin = e.s2;
        qin.insert(qin.end(), a_plus.begin(), a_plus.end());
        double qn = forward(agent.target_critic, qin)[0];
        double g = sign * divergence_h(a_plus, prior(e.x2_raw), spec);
        y[k] = e.r + gamma * (g / beta + qn);
    }
    return y;
}

double critic_update(AgentPair& agent, const std::vector<const Experience*>& batch,
                     const Vec& targets) {
    if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
    double inv_n = 1.0 / static_cast<double>(batch.size());
    GradRecord total = GradRecord::zeros(agent.critic);
    double loss = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        const Experience& e = *batch[k];
        Vec qin = e.s;
        qin.insert(qin.end(), e.a.begin(), e.a.end());
        double q = forward(agent.critic, qin)[0];
        double err = q - targets[k];
        loss += err * err * inv_n;
        backward_acc(agent.critic, qin, Vec{2.0 * err * inv_n}, total);
    }
    optimizer_step(agent.critic, total, agent.critic_opt);
    return loss;
}

GradRecord actor_gradient(const AgentPair& agent, const std::vector<const Experience*>& batch,
                          double* objective) {
    double inv_n = 1.0 / static_cast<double>(batch.size());
    int s_dim = agent.actor.input_size();
    int a_dim = agent.actor.output_size();
    GradRecord total = GradRecord::zeros(agent.actor);
    double obj = 0.0;
    for (const Experience* ep : batch) {
        const Experience& e = *ep;
        Vec a = forward(agent.actor, e.s);
        Vec qin = e.s;
        qin.insert(qin.end(), a.begin(), a.end());
        Vec dq = input_gradient(agent.critic, qin, Vec{inv_n});
        obj += forward(agent.critic, qin)[0] * inv_n;
        Vec upstream(dq.begin() + s_dim, dq.begin() + s_dim + a_dim);
        backward_acc(agent.actor, e.s, upstream, total);
    }
    if (objective) *objective = obj;
    return total;
}

double actor_update(AgentPair& agent, const std::vector<const Experience*>& batch) {
    if (batch.empty()) throw std::invalid_argument("actor_update: empty batch");
    double obj = 0.0;
    GradRecord g = actor_gradient(agent, batch, &obj);
    g.scale(-1.0); // ascend
    optimizer_step(agent.actor, g, agent.actor_opt);
    return obj;
}

namespace {

void blend(Mlp& target, const Mlp& learned, double tau) {
    for (std::size_t l = 0; l < target.layers.size(); ++l) {
        for (std::size_t k = 0; k < target.layers[l].w.size(); ++k)
            target.layers[l].w[k] =
                tau * learned.layers[l].w[k] + (1.0 - tau) * target.layers[l].w[k];
        for (std::size_t k = 0; k < target.layers[l].b.size(); ++k)
            target.layers[l].b[k] =
                tau * learned.layers[l].b[k] + (1.0 - tau) * target.layers[l].b[k];
    }
}

} // namespace

void soft_update(AgentPair& agent, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw std::invalid_argument("soft_update: tau must be in [0,1]");
    blend(agent.target_actor, agent.actor, tau);
    blend(agent.target_critic, agent.critic, tau);
}

double deep_average_q(const AgentPair& agent, const ProblemInstance& inst,
                      std::size_t sample_cap, std::uint64_t sample_seed) {
    StateSpace ss(inst.m, inst.demand_limit);
    std::vector<State> eval_states;
    if (ss.size() <= sample_cap) {
        for (std::size_t i = 0; i < ss.size(); ++i) eval_states.push_back(ss.state(i));
    } else {
        RngStream rng(sample_seed);
        for (std::size_t k = 0; k < sample_cap; ++k) {
            State s;
            s.x.resize(inst.m);
            for (int i = 0; i < inst.m; ++i) s.x[i] = rng.uniform_int(inst.demand_limit + 1);
            eval_states.push_back(std::move(s));
        }
    }
    double sum = 0.0;
    for (const State& s : eval_states) {
        Vec sn = normalize_state(s, inst.demand_limit);
        Vec a = forward(agent.actor, sn);
        Vec qin = sn;
        qin.insert(qin.end(), a.begin(), a.end());
        sum += forward(agent.critic, qin)[0];
    }
    return sum / static_cast<double>(eval_states.size());
}

DeepResult train_agent(const ProblemInstance& inst, const DeepConfig& config, DeepMethod method,
                       const BetaSchedule& beta_schedule, const DivergenceSpec& spec,
                       RngStream& rng) {
    inst.validate();
    BetaSchedule beta = method == DeepMethod::DDPG ? BetaSchedule::fixed(1e12) : beta_schedule;
    DeepResult out;
    out.agent = make_agent(inst, config.actor_lr, config.critic_lr, config.tau, rng);
    ReplayBuffer buffer(config.replay_capacity);
    SinglePeriodPrior prior(inst);
    DeepPriorFn prior_fn = [&prior](const IVec& x) { return prior(x); };

    auto t0 = std::chrono::steady_clock::now();
    long long global_step = 0;
    int consecutive = 0;
    std::vector<std::pair<int, double>> checkpoints;

    for (int episode = 0; episode < config.episode_cap; ++episode) {
        State x;
        x.x.resize(inst.m);
        for (int i = 0; i < inst.m; ++i) x.x[i] = rng.uniform_int(inst.demand_limit + 1);
        double episode_reward = 0.0;
        long long infeasible = 0;
        double beta_now = beta.at(std::max<long long>(1, global_step));
        for (int t = 0; t < config.step_cap; ++t) {
            ++global_step;
            beta_now = beta.at(global_step);
            auto [probs, Q] = select_action(out.agent, inst, x, config.exploration, episode, rng);
            StepOutcome o = step(inst, x, Q, rng);
            if (o.demand_penalty > 0.0 || o.capacity_penalty > 0.0) ++infeasible;
            episode_reward += o.net_reward;
            Experience e;
            e.s = normalize_state(x, inst.demand_limit);
            e.a = std::move(probs);
            e.r = o.net_reward;
            e.s2 = normalize_state(o.next_state, inst.demand_limit);
            e.x2_raw = o.next_state.x;
            buffer.push(std::move(e));
            x = o.next_state;
            if (buffer.size() >= config.batch_size) {
                auto batch = buffer.sample(config.batch_size, rng);
                Vec y = compute_dk_target(batch, out.agent, inst.gamma, beta_now, prior_fn, spec);
                critic_update(out.agent, batch, y);
                actor_update(out.agent, batch);
                soft_update(out.agent, config.tau);
            }
        }
        auto now = std::chrono::steady_clock::now();
        long long wall_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(now - t0).count();
        EpisodeRow row;
        row.episode = episode + 1;
        row.steps = config.step_cap;
        row.avg_q = deep_average_q(out.agent, inst, config.avg_q_sample_cap);
        row.episode_reward = episode_reward;
        row.infeasible_action_count = infeasible;
        row.beta = beta_now;
        row.epsilon = config.exploration.epsilon(episode);
        row.wall_ms = wall_ms;
        out.record.rows.push_back(row);

        if ((episode + 1) % config.checkpoint_interval == 0) {
            checkpoints.emplace_back(episode + 1, row.avg_q);
            if (checkpoints.size() >= 2 && config.convergence_threshold > 0.0) {
                double prev = checkpoints[checkpoints.size() - 2].second;
                double cur = checkpoints.back().second;
                double change = prev == 0.0 ? (cur == 0.0 ? 0.0 : 1.0)
                                            : std::abs(cur - prev) / std::abs(prev);
                consecutive = change < config.convergence_threshold ? consecutive + 1 : 0;
                if (consecutive >= 2) {
                    out.record.converged = true;
                    out.record.episodes_to_convergence = episode + 1;
                    out.record.time_to_convergence_s = static_cast<double>(wall_ms) / 1000.0;
                    break;
                }
            }
        }
        if (config.wall_clock_cap_s > 0.0 &&
            static_cast<double>(wall_ms) / 1000.0 > config.wall_clock_cap_s) {
            out.record.timed_out = true;
            break;
        }
    }
    return out;
}

double kappa_search(const ProblemInstance& inst, const DeepConfig& config,
                    const std::vector<double>& candidates, int probe_episodes,
                    std::uint64_t seed) {
    if (candidates.empty()) throw std::invalid_argument("kappa_search: no candidates");
    DeepConfig probe = config;
    probe.episode_cap = probe_episodes;
    probe.convergence_threshold = 0.0;
    double best_kappa = candidates[0];
    double best_reward = -std::numeric_limits<double>::infinity();
    for (double kappa : candidates) {
        RngStream rng(seed);
        DeepResult r = train_agent(inst, probe, DeepMethod::DKDDPG, BetaSchedule::linear(kappa),
                                   DivergenceSpec{}, rng);
        double total = 0.0;
        for (const EpisodeRow& row : r.record.rows) total += row.episode_reward;
        if (total > best_reward) { // strict: first index wins ties
            best_reward = total;
            best_kappa = kappa;
        }
    }
    return best_kappa;
}

std::string agent_to_json(const AgentPair& agent, const BetaSchedule& beta,
                          const ExplorationSchedule& eps, std::uint64_t seed,
                          const std::string& instance_hash) {
    nlohmann::json j;
    j["actor"] = nlohmann::json::parse(mlp_to_json(agent.actor));
    j["critic"] = nlohmann::json::parse(mlp_to_json(agent.critic));
    j["tau"] = agent.tau;
    j["beta_schedule"] = {{"mode", beta.mode == BetaSchedule::Mode::Fixed ? "fixed" : "linear"},
                          {"beta", beta.beta},
                          {"kappa", beta.kappa}};
    j["epsilon_schedule"] = {{"start", eps.eps_start},
                             {"floor", eps.eps_floor},
                             {"anneal_episodes", eps.anneal_episodes},
                             {"noise_sigma", eps.noise_sigma}};
    j["seed"] = seed;
    j["instance_hash"] = instance_hash;
    return j.dump();
}

AgentPair agent_from_json(const std::string& text, double actor_lr, double critic_lr) {
    nlohmann::json j = nlohmann::json::parse(text);
    AgentPair ag;
    ag.actor = mlp_from_json(j.at("actor").dump());
    ag.critic = mlp_from_json(j.at("critic").dump());
    ag.target_actor = ag.actor;
    ag.target_critic = ag.critic;
    ag.tau = j.value("tau", 5e-4);
    ag.actor_opt = OptimizerState::make(OptimizerKind::Adam, actor_lr, ag.actor);
    ag.critic_opt = OptimizerState::make(OptimizerKind::Adam, critic_lr, ag.critic);
    return ag;
}

} // namespace matchrl
