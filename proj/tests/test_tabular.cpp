#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "matchrl/harness.hpp"
#include "matchrl/tabular.hpp"
#include "matchrl/transport.hpp"

using namespace matchrl;

namespace {

Vec random_simplex(std::size_t k, RngStream& rng) {
    Vec p(k);
    double sum = 0.0;
    for (double& v : p) {
        v = -std::log(1.0 - rng.uniform());
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

ProblemInstance worked_example() {
    ProblemInstance inst;
    inst.m = inst.n = 2;
    inst.horizon_T = 0;
    inst.gamma = 0.9;
    inst.capacities = {6, 5};
    inst.demand_pmfs = {{0.2, 0.2, 0.2, 0.2, 0.2, 0, 0, 0, 0},
                        {0.2, 0, 0.2, 0.2, 0.2, 0, 0, 0, 0.2}};
    inst.reward = build_horizontal_reward(10.0, {0, 3, 5, 2}, 2, 2);
    inst.k1 = inst.k2 = default_penalty_constant(inst.reward);
    inst.demand_limit = 22;
    return inst;
}

QTable two_state_table() {
    // state 0: two actions, state 1: two actions
    QTable t;
    t.q = {{0.0, 2.0}, {1.0, 0.5}};
    t.visits = {{0, 0}, {0, 0}};
    return t;
}

} // namespace

TEST_CASE("q_learning_update arithmetic") {
    QTable t = two_state_table();
    t.q[0][0] = 0.0;
    CHECK(q_learning_update(t, 0, 0, 4.0, 1, 0.5, 0.9) == doctest::Approx(2.45));
    // max over next-state row is 1.0, so target = 4 + 0.9 = 4.9, new = 2.45

    t = two_state_table();
    double before = t.q[0][1];
    CHECK(q_learning_update(t, 0, 1, 7.0, 1, 0.0, 0.9) == doctest::Approx(before));

    t = two_state_table();
    CHECK(q_learning_update(t, 1, 0, 3.0, 0, 1.0, 0.0) == doctest::Approx(3.0));
}

TEST_CASE("penalty_g") {
    DivergenceSpec l2;
    l2.kind = DivergenceKind::SquaredL2;
    Vec mu{0.5, 0.5};
    CHECK(penalty_g(mu, mu, l2, 0) == doctest::Approx(0.0));
    CHECK(penalty_g({1.0, 0.0}, mu, l2, 0) == doctest::Approx(-0.25));
    CHECK(penalty_g({0.0, 1.0}, {1.0, 0.0}, l2, 0) == doctest::Approx(-1.0));

    DivergenceSpec kl;
    kl.kind = DivergenceKind::KL;
    kl.mu_smoothing = 0.0;
    CHECK(penalty_g(mu, mu, kl, 0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(penalty_g(mu, {1.0, 0.0}, kl, 1), std::domain_error);

    DivergenceSpec literal = l2;
    literal.literal_plus_h = true;
    CHECK(penalty_g({1.0, 0.0}, mu, literal, 0) == doctest::Approx(0.25));
}

TEST_CASE("divergence h properties") {
    RngStream rng(31);
    DivergenceSpec specs[2];
    specs[0].kind = DivergenceKind::SquaredL2;
    specs[1].kind = DivergenceKind::KL;
    for (const auto& spec : specs) {
        for (int t = 0; t < 100; ++t) {
            std::size_t k = 2 + rng.uniform_int(4);
            Vec mu = random_simplex(k, rng);
            Vec p = random_simplex(k, rng), q = random_simplex(k, rng);
            if (spec.kind == DivergenceKind::SquaredL2)
                CHECK(divergence_h(mu, mu, spec) == doctest::Approx(0.0).epsilon(1e-12));
            CHECK(divergence_h(p, mu, spec) >= -1e-9);
            Vec mid(k);
            for (std::size_t i = 0; i < k; ++i) mid[i] = 0.5 * (p[i] + q[i]);
            CHECK(divergence_h(mid, mu, spec) <=
                  0.5 * (divergence_h(p, mu, spec) + divergence_h(q, mu, spec)) + 1e-12);
        }
    }
}

TEST_CASE("value_penalty_F") {
    DivergenceSpec l2;
    Vec q{1.0, 0.0};
    Vec mu{0.5, 0.5};
    CHECK(value_penalty_F(q, {1.0, 0.0}, mu, 1.0, l2) == doctest::Approx(0.75));
    CHECK(value_penalty_F(q, {1.0, 0.0}, mu, 1e12, l2) == doctest::Approx(1.0));
    CHECK(value_penalty_F(q, mu, mu, 1.0, l2) == doctest::Approx(0.5)); // g vanishes at mu
}

TEST_CASE("max_policy_F") {
    DivergenceSpec l2;
    DivergenceSpec kl;
    kl.kind = DivergenceKind::KL;
    Vec q{1.0, 0.0};
    Vec mu{0.5, 0.5};

    SUBCASE("huge beta selects the greedy vertex") {
        for (const auto& spec : {l2, kl}) {
            auto [pi, f] = max_policy_F(q, mu, 1e12, spec);
            CHECK(f == doctest::Approx(1.0).epsilon(1e-6));
            CHECK(pi[0] == doctest::Approx(1.0).epsilon(1e-3));
        }
    }

    SUBCASE("tiny beta collapses to the prior") {
        for (const auto& spec : {l2, kl}) {
            auto [pi, f] = max_policy_F(q, mu, 1e-9, spec);
            CHECK(pi[0] == doctest::Approx(mu[0]).epsilon(1e-3));
            CHECK(f == doctest::Approx(0.5).epsilon(1e-3));
        }
    }

    SUBCASE("grid-search value on the 1-simplex") {
        // best over pi = [p, 1-p] of p*(1 - (p-0.5)^2/1 ... ) computed by scan
        double best = -1e300;
        for (int k = 0; k <= 100000; ++k) {
            double p = k / 100000.0;
            double f = value_penalty_F(q, {p, 1.0 - p}, mu, 1.0, l2);
            best = std::max(best, f);
        }
        auto [pi, f] = max_policy_F(q, mu, 1.0, l2);
        CHECK(f == doctest::Approx(best).epsilon(1e-6));
        CHECK(f == doctest::Approx(0.75).epsilon(1e-6));
        CHECK(pi[0] == doctest::Approx(1.0).epsilon(1e-4));
    }

    SUBCASE("returns a simplex point dominating random candidates") {
        RngStream rng(77);
        for (int t = 0; t < 20; ++t) {
            std::size_t k = 2 + rng.uniform_int(5);
            Vec qr(k);
            for (double& v : qr) v = rng.uniform() * 10.0 - 5.0;
            Vec mur = random_simplex(k, rng);
            double beta = std::pow(10.0, rng.uniform() * 4.0 - 2.0);
            for (const auto& spec : {l2, kl}) {
                auto [pi, f] = max_policy_F(qr, mur, beta, spec);
                double sum = 0.0;
                for (double p : pi) {
                    CHECK(p >= -1e-12);
                    sum += p;
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
                for (int c = 0; c < 50; ++c) {
                    Vec cand = random_simplex(k, rng);
                    CHECK(f >= value_penalty_F(qr, cand, mur, beta, spec) - 1e-6);
                }
                CHECK(f >= value_penalty_F(qr, mur, mur, beta, spec) - 1e-9);
            }
        }
    }
}

TEST_CASE("dk_q_update") {
    DivergenceSpec l2;
    PriorPolicy mu;
    mu.rows = {{0.5, 0.5}, {0.5, 0.5}};

    SUBCASE("composes the next-state maximizer") {
        QTable t = two_state_table();
        t.q[1] = {1.0, 0.0};
        t.q[0][0] = 0.0;
        // next-state F* = 0.75 at beta 1 (see max_policy_F grid case)
        CHECK(dk_q_update(t, 0, 0, 1.0, 1, 1.0, 0.9, 1.0, mu, l2) == doctest::Approx(1.675));
    }

    SUBCASE("no bootstrap at gamma zero") {
        QTable t = two_state_table();
        CHECK(dk_q_update(t, 0, 0, 5.0, 1, 1.0, 0.0, 0.01, mu, l2) == doctest::Approx(5.0));
    }

    SUBCASE("huge beta reduces to the plain update") {
        RngStream rng(5);
        for (int t = 0; t < 200; ++t) {
            QTable a = two_state_table(), b = two_state_table();
            for (auto& row : a.q)
                for (double& v : row) v = rng.uniform() * 10.0 - 5.0;
            b.q = a.q;
            double r = rng.uniform() * 10.0 - 5.0;
            double alpha = 0.1 + 0.9 * rng.uniform();
            double ql = q_learning_update(a, 0, 1, r, 1, alpha, 0.9);
            double dk = dk_q_update(b, 0, 1, r, 1, alpha, 0.9, 1e12, mu, l2);
            CHECK(dk == doctest::Approx(ql).epsilon(1e-6));
        }
    }
}

TEST_CASE("prior policy") {
    ProblemInstance inst = worked_example();
    ActionSpace as = ActionSpace::build(inst);
    PriorPolicy prior = make_prior_policy(inst, as);
    for (std::size_t s = 0; s < prior.rows.size(); ++s) {
        double sum = 0.0;
        int nonzero = 0;
        for (double p : prior.rows[s]) {
            CHECK(p >= 0.0);
            sum += p;
            if (p > 0.0) ++nonzero;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(nonzero == 1); // unsmoothed prior is one-hot
    }
    std::size_t s0 = as.states.index(State{{8, 7}});
    int mode = 0;
    for (std::size_t a = 1; a < prior.rows[s0].size(); ++a)
        if (prior.rows[s0][a] > prior.rows[s0][mode]) mode = static_cast<int>(a);
    CHECK(as.actions[s0][mode].q == IVec{6, 0, 0, 5});

    PriorPolicy smoothed = make_prior_policy(inst, as, 0.01);
    for (double p : smoothed.rows[s0]) CHECK(p > 0.0);
}

TEST_CASE("training loops") {
    SUBCASE("single state and action converges to the geometric series") {
        ProblemInstance inst;
        inst.m = inst.n = 1;
        inst.gamma = 0.5;
        inst.capacities = {0};
        inst.demand_pmfs = {{1.0}};
        inst.reward = {3.0};
        inst.k1 = inst.k2 = 6.0;
        inst.demand_limit = 0;
        ActionSpace as = ActionSpace::build(inst);
        REQUIRE(as.actions[0].size() == 1); // only the zero matrix
        LearningConfig lc;
        lc.episode_cap = 30;
        lc.step_cap = 100;
        PriorPolicy prior = make_prior_policy(inst, as);
        RngStream rng(1);
        TabularResult r = train_tabular(inst, as, lc, TabularMethod::QL, BetaSchedule::fixed(1.0),
                                        prior, DivergenceSpec{}, rng);
        // expected net reward is 0 per step, so Q -> 0/(1-gamma) = 0
        CHECK(r.table.q[0][0] == doctest::Approx(0.0).epsilon(1e-9));
    }

    SUBCASE("positive reward geometric series") {
        ProblemInstance inst;
        inst.m = inst.n = 1;
        inst.gamma = 0.5;
        inst.capacities = {1};
        inst.demand_pmfs = {{0.0, 1.0}}; // one new unit every step
        inst.reward = {3.0};
        inst.k1 = inst.k2 = 6.0;
        inst.demand_limit = 1;
        ActionSpace as = ActionSpace::build(inst);
        LearningConfig lc;
        lc.episode_cap = 200;
        lc.step_cap = 200;
        PriorPolicy prior = make_prior_policy(inst, as);
        RngStream rng(1);
        TabularResult r = train_tabular(inst, as, lc, TabularMethod::QL, BetaSchedule::fixed(1.0),
                                        prior, DivergenceSpec{}, rng);
        // matching the unit every step earns 3: Q*(x=1, match) = 3/(1-0.5) = 6
        std::size_t s1 = as.states.index(State{{1}});
        CHECK(r.table.q[s1][1] == doctest::Approx(6.0).epsilon(0.01));
    }

    SUBCASE("DKQL with huge fixed beta replays QL exactly") {
        ProblemInstance inst = make_verification_instance();
        ActionSpace as = ActionSpace::build(inst);
        LearningConfig lc;
        lc.episode_cap = 20;
        lc.step_cap = 50;
        PriorPolicy prior = make_prior_policy(inst, as, 0.01);
        DivergenceSpec kl;
        kl.kind = DivergenceKind::KL;
        RngStream r1(9), r2(9);
        TabularResult ql = train_tabular(inst, as, lc, TabularMethod::QL,
                                         BetaSchedule::fixed(1e12), prior, kl, r1);
        TabularResult dk = train_tabular(inst, as, lc, TabularMethod::DKQL,
                                         BetaSchedule::fixed(1e12), prior, kl, r2);
        for (std::size_t s = 0; s < ql.table.q.size(); ++s)
            for (std::size_t a = 0; a < ql.table.q[s].size(); ++a)
                CHECK(dk.table.q[s][a] == doctest::Approx(ql.table.q[s][a]).epsilon(1e-6));
        REQUIRE(ql.record.rows.size() == dk.record.rows.size());
        for (std::size_t e = 0; e < ql.record.rows.size(); ++e)
            CHECK(ql.record.rows[e].episode_reward ==
                  doctest::Approx(dk.record.rows[e].episode_reward).epsilon(1e-9));
    }

    SUBCASE("close to the exact table on the verification instance") {
        auto trials = run_convergence_suite(BetaSchedule::fixed(10.0), {1}, 1500);
        CHECK(trials[0].rel_distance < 0.05);
    }
}

TEST_CASE("tabular average q") {
    QTable t;
    t.q = {{7.0}};
    t.visits = {{0}};
    CHECK(tabular_average_q(t) == doctest::Approx(7.0));
    t = two_state_table();
    CHECK(tabular_average_q(t) == doctest::Approx((2.0 + 1.0) / 2.0));
}
