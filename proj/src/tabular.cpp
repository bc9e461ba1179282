#include "matchrl/tabular.hpp"

#include "matchrl/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace matchrl {

double LearningConfig::epsilon_at(int episode) const {
    if (epsilon_anneal_episodes <= 0 || epsilon_start <= epsilon_floor) return epsilon_floor;
    double ratio = epsilon_floor / epsilon_start;
    double e = epsilon_start * std::pow(ratio, static_cast<double>(episode) /
                                                   static_cast<double>(epsilon_anneal_episodes));
    return std::max(epsilon_floor, e);
}

QTable QTable::zeros(const ActionSpace& as) {
    QTable t;
    t.q.resize(as.actions.size());
    t.visits.resize(as.actions.size());
    for (std::size_t s = 0; s < as.actions.size(); ++s) {
        t.q[s].assign(as.actions[s].size(), 0.0);
        t.visits[s].assign(as.actions[s].size(), 0);
    }
    return t;
}

double QTable::max_q(std::size_t s) const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : q[s]) m = std::max(m, v);
    return m;
}

int QTable::argmax(std::size_t s) const {
    int best = 0;
    for (std::size_t a = 1; a < q[s].size(); ++a)
        if (q[s][a] > q[s][best]) best = static_cast<int>(a);
    return best;
}

double q_learning_update(QTable& table, std::size_t s, int a, double r, std::size_t s_next,
                         double alpha, double gamma) {
    if (s >= table.q.size() || s_next >= table.q.size())
        throw std::out_of_range("q_learning_update: unknown state");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("q_learning_update: alpha must be in [0,1]");
    double target = r + gamma * table.max_q(s_next);
    double& cell = table.q[s][a];
    cell = (1.0 - alpha) * cell + alpha * target;
    return cell;
}

namespace {

Vec smoothed(const Vec& mu, double eps) {
    if (eps <= 0.0) return mu;
    Vec out(mu.size());
    double u = eps / static_cast<double>(mu.size());
    for (std::size_t a = 0; a < mu.size(); ++a) out[a] = (1.0 - eps) * mu[a] + u;
    return out;
}

// Euclidean projection onto the probability simplex.
Vec project_simplex(Vec v) {
    Vec u = v;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0, theta = 0.0;
    int rho = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        css += u[k];
        double t = (css - 1.0) / static_cast<double>(k + 1);
        if (u[k] - t > 0.0) {
            rho = static_cast<int>(k + 1);
            theta = t;
        }
    }
    (void)rho;
    for (double& x : v) x = std::max(0.0, x - theta);
    return v;
}

} // namespace

double penalty_g(const Vec& pi_row, const Vec& mu_row, const DivergenceSpec& spec, int a) {
    double sign = spec.literal_plus_h ? 1.0 : -1.0;
    switch (spec.kind) {
        case DivergenceKind::SquaredL2: {
            double d = pi_row[a] - mu_row[a];
            return sign * (d * d);
        }
        case DivergenceKind::KL: {
            Vec mu = smoothed(mu_row, spec.mu_smoothing);
            if (mu[a] <= 0.0)
                throw std::domain_error("penalty_g: zero smoothed prior mass under KL");
            if (pi_row[a] <= 0.0) return sign * std::numeric_limits<double>::infinity();
            return sign * std::log(pi_row[a] / mu[a]);
        }
    }
    return 0.0;
}

double value_penalty_F(const Vec& q_row, const Vec& pi_row, const Vec& mu_row, double beta,
                       const DivergenceSpec& spec) {
    double f = 0.0;
    for (std::size_t a = 0; a < q_row.size(); ++a) {
        if (pi_row[a] == 0.0) continue; // 0 * g, g possibly infinite under KL
        f += pi_row[a] * (penalty_g(pi_row, mu_row, spec, static_cast<int>(a)) / beta +
                          q_row[a]);
    }
    return f;
}

// Aggregate divergence used by property tests: squared L2 distance between
// the distributions, or KL against the smoothed prior. Convex in p.
double divergence_h(const Vec& p, const Vec& mu_row, const DivergenceSpec& spec) {
    switch (spec.kind) {
        case DivergenceKind::SquaredL2: {
            double s = 0.0;
            for (std::size_t a = 0; a < p.size(); ++a) {
                double d = p[a] - mu_row[a];
                s += d * d;
            }
            return s;
        }
        case DivergenceKind::KL: {
            Vec mu = smoothed(mu_row, spec.mu_smoothing);
            double s = 0.0;
            for (std::size_t a = 0; a < p.size(); ++a) {
                if (p[a] <= 0.0) continue;
                if (mu[a] <= 0.0)
                    throw std::domain_error("divergence_h: zero smoothed prior mass");
                s += p[a] * std::log(p[a] / mu[a]);
            }
            return s;
        }
    }
    return 0.0;
}

namespace {

struct PgaResult {
    Vec pi;
    double f;
    bool converged;
};

PgaResult pga_from(const Vec& start, const Vec& q_row, const Vec& mu_row, double beta,
                   const DivergenceSpec& spec) {
    const int cap = 10'000;
    const double residual_tol = 1e-8;
    double sign = spec.literal_plus_h ? 1.0 : -1.0;
    // Curvature of the weighted penalty is bounded by 6/beta per coordinate.
    double step = 0.1 / std::max(1.0, 6.0 / beta);
    Vec pi = start;
    for (int it = 0; it < cap; ++it) {
        Vec grad(pi.size());
        for (std::size_t a = 0; a < pi.size(); ++a) {
            double d = pi[a] - mu_row[a];
            grad[a] = q_row[a] + sign / beta * (d * d + 2.0 * pi[a] * d);
        }
        Vec next(pi.size());
        for (std::size_t a = 0; a < pi.size(); ++a) next[a] = pi[a] + step * grad[a];
        next = project_simplex(std::move(next));
        double residual = 0.0;
        for (std::size_t a = 0; a < pi.size(); ++a)
            residual = std::max(residual, std::abs(next[a] - pi[a]));
        pi = std::move(next);
        if (residual < residual_tol)
            return {pi, value_penalty_F(q_row, pi, mu_row, beta, spec), true};
    }
    return {pi, value_penalty_F(q_row, pi, mu_row, beta, spec), false};
}

} // namespace

std::pair<Vec, double> max_policy_F(const Vec& q_row, const Vec& mu_row, double beta,
                                    const DivergenceSpec& spec) {
    if (!(beta > 0.0)) throw std::invalid_argument("max_policy_F: beta must be > 0");
    std::size_t K = q_row.size();
    if (K == 0) throw std::invalid_argument("max_policy_F: empty action set");

    if (spec.kind == DivergenceKind::KL && !spec.literal_plus_h) {
        // Closed-form soft-max maximizer of pi.Q - (1/beta) KL(pi || mu_eps).
        Vec mu = smoothed(mu_row, spec.mu_smoothing);
        Vec logits(K, -std::numeric_limits<double>::infinity());
        double M = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < K; ++a) {
            if (mu[a] > 0.0) logits[a] = std::log(mu[a]) + beta * q_row[a];
            M = std::max(M, logits[a]);
        }
        if (!std::isfinite(M))
            throw std::domain_error("max_policy_F: prior has no support");
        double Z = 0.0;
        Vec pi(K, 0.0);
        for (std::size_t a = 0; a < K; ++a) {
            if (std::isfinite(logits[a])) pi[a] = std::exp(logits[a] - M);
            Z += pi[a];
        }
        for (double& p : pi) p /= Z;
        double f = (M + std::log(Z)) / beta;
        return {pi, f};
    }

    // Cubic objective on the simplex: multi-start projected gradient ascent,
    // with mu and every vertex as direct candidates.
    Vec best_pi = mu_row;
    double best_f = value_penalty_F(q_row, mu_row, mu_row, beta, spec);
    std::size_t best_vertex = 0;
    for (std::size_t a = 0; a < K; ++a) {
        Vec e(K, 0.0);
        e[a] = 1.0;
        double f = value_penalty_F(q_row, e, mu_row, beta, spec);
        if (f > best_f) {
            best_f = f;
            best_pi = e;
        }
        if (a == 0 || q_row[a] > q_row[best_vertex]) best_vertex = a;
    }

    std::vector<Vec> starts;
    starts.push_back(mu_row);
    starts.push_back(Vec(K, 1.0 / static_cast<double>(K)));
    Vec e(K, 0.0);
    e[best_vertex] = 1.0;
    starts.push_back(e);
    RngStream rng(0x5eedULL); // fixed: max_policy_F must be deterministic
    int extra = K <= 64 ? 4 : 2;
    for (int k = 0; k < extra; ++k) {
        Vec r(K);
        double s = 0.0;
        for (std::size_t a = 0; a < K; ++a) {
            r[a] = -std::log(std::max(rng.uniform(), 0x1.0p-53));
            s += r[a];
        }
        for (double& v : r) v /= s;
        starts.push_back(std::move(r));
    }

    bool any_converged = false;
    for (const Vec& s0 : starts) {
        PgaResult res = pga_from(s0, q_row, mu_row, beta, spec);
        any_converged = any_converged || res.converged;
        if (res.f > best_f) {
            best_f = res.f;
            best_pi = res.pi;
        }
    }
    if (!any_converged)
        throw std::runtime_error("max_policy_F: projected gradient ascent did not converge");
    return {best_pi, best_f};
}

double dk_q_update(QTable& table, std::size_t s, int a, double r, std::size_t s_next,
                   double alpha, double gamma, double beta_t, const PriorPolicy& mu,
                   const DivergenceSpec& spec) {
    if (s >= table.q.size() || s_next >= table.q.size())
        throw std::out_of_range("dk_q_update: unknown state");
    auto [pi, f_star] = max_policy_F(table.q[s_next], mu.rows[s_next], beta_t, spec);
    (void)pi;
    double target = r + gamma * f_star;
    double& cell = table.q[s][a];
    cell = (1.0 - alpha) * cell + alpha * target;
    return cell;
}

PriorPolicy make_prior_policy(const ProblemInstance& inst, const ActionSpace& as,
                              double smoothing) {
    PriorPolicy prior;
    prior.rows.resize(as.actions.size());
    for (std::size_t s = 0; s < as.actions.size(); ++s) {
        State x = as.states.state(s);
        MatchingMatrix opt =
            solve_single_period(x, inst.capacities, inst.reward, inst.m, inst.n);
        int idx = as.find(s, opt);
        if (idx < 0)
            throw std::logic_error("make_prior_policy: optimal action missing from enumeration");
        std::size_t K = as.actions[s].size();
        Vec row(K, smoothing / static_cast<double>(K));
        row[idx] += 1.0 - smoothing;
        prior.rows[s] = std::move(row);
    }
    return prior;
}

double tabular_average_q(const QTable& table) {
    double s = 0.0;
    for (std::size_t i = 0; i < table.q.size(); ++i) s += table.max_q(i);
    return s / static_cast<double>(table.q.size());
}

TabularResult train_tabular(const ProblemInstance& inst, const ActionSpace& as,
                            const LearningConfig& config, TabularMethod method,
                            const BetaSchedule& beta_schedule, const PriorPolicy& prior,
                            const DivergenceSpec& spec, RngStream& rng) {
    TabularResult out;
    out.table = QTable::zeros(as);
    std::size_t ns = as.states.size();
    auto t0 = std::chrono::steady_clock::now();
    long long global_step = 0;
    std::vector<std::pair<int, double>> checkpoints;
    int consecutive = 0;

    for (int episode = 0; episode < config.episode_cap; ++episode) {
        double eps = config.epsilon_at(episode);
        std::size_t s = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(ns)));
        double episode_reward = 0.0;
        double beta_now = beta_schedule.at(std::max<long long>(1, global_step));
        int steps = 0;
        for (; steps < config.step_cap; ++steps) {
            ++global_step;
            int a;
            int na = static_cast<int>(as.actions[s].size());
            if (rng.uniform() < eps)
                a = rng.uniform_int(na);
            else
                a = out.table.argmax(s);
            StepOutcome o = step(inst, as.states.state(s), as.actions[s][a], rng);
            std::size_t s2 = as.states.index(o.next_state);
            double alpha =
                1.0 / std::pow(1.0 + out.table.visits[s][a], config.alpha_exponent);
            beta_now = beta_schedule.at(global_step);
            if (method == TabularMethod::QL)
                q_learning_update(out.table, s, a, o.net_reward, s2, alpha, inst.gamma);
            else
                dk_q_update(out.table, s, a, o.net_reward, s2, alpha, inst.gamma, beta_now,
                            prior, spec);
            out.table.visits[s][a]++;
            episode_reward += o.net_reward;
            s = s2;
        }
        auto now = std::chrono::steady_clock::now();
        long long wall_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(now - t0).count();
        EpisodeRow row;
        row.episode = episode + 1;
        row.steps = steps;
        row.avg_q = tabular_average_q(out.table);
        row.episode_reward = episode_reward;
        row.infeasible_action_count = 0; // actions drawn from the feasible enumeration
        row.beta = beta_now;
        row.epsilon = eps;
        row.wall_ms = wall_ms;
        out.record.rows.push_back(row);

        if ((episode + 1) % config.checkpoint_interval == 0) {
            checkpoints.emplace_back(episode + 1, row.avg_q);
            if (checkpoints.size() >= 2) {
                double prev = checkpoints[checkpoints.size() - 2].second;
                double cur = checkpoints.back().second;
                double change = prev == 0.0
                                    ? (cur == 0.0 ? 0.0 : 1.0)
                                    : std::abs(cur - prev) / std::abs(prev);
                if (config.convergence_threshold > 0.0 && change < config.convergence_threshold)
                    ++consecutive;
                else
                    consecutive = 0;
                if (config.convergence_threshold > 0.0 && consecutive >= 2) {
                    out.record.converged = true;
                    out.record.episodes_to_convergence = episode + 1;
                    out.record.time_to_convergence_s = static_cast<double>(wall_ms) / 1000.0;
                    break;
                }
            }
        }
    }
    return out;
}

} // namespace matchrl
