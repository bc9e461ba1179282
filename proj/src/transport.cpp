#include "matchrl/transport.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace matchrl {

namespace {

struct Edge {
    int to;
    int cap;
    double cost;
    int rev; // index of the reverse edge in graph[to]
};

struct FlowGraph {
    std::vector<std::vector<Edge>> adj;

    explicit FlowGraph(int nodes) : adj(nodes) {}

    void add(int u, int v, int cap, double cost) {
        adj[u].push_back({v, cap, cost, static_cast<int>(adj[v].size())});
        adj[v].push_back({u, 0, -cost, static_cast<int>(adj[u].size()) - 1});
    }
};

// Max-profit flow: augment along the most negative-cost path while one
// exists. SPFA on the residual network; deterministic scan order.
double run_profit_flow(FlowGraph& g, int s, int t) {
    const double inf = std::numeric_limits<double>::infinity();
    double total_cost = 0.0;
    int nodes = static_cast<int>(g.adj.size());
    for (;;) {
        std::vector<double> dist(nodes, inf);
        std::vector<int> pe(nodes, -1), pv(nodes, -1);
        std::vector<char> inq(nodes, 0);
        dist[s] = 0.0;
        std::deque<int> q{s};
        inq[s] = 1;
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            inq[u] = 0;
            for (int k = 0; k < static_cast<int>(g.adj[u].size()); ++k) {
                const Edge& e = g.adj[u][k];
                if (e.cap <= 0) continue;
                double nd = dist[u] + e.cost;
                if (nd < dist[e.to] - 1e-15) {
                    dist[e.to] = nd;
                    pv[e.to] = u;
                    pe[e.to] = k;
                    if (!inq[e.to]) {
                        q.push_back(e.to);
                        inq[e.to] = 1;
                    }
                }
            }
        }
        if (!(dist[t] < -1e-12)) break;
        int push = std::numeric_limits<int>::max();
        for (int v = t; v != s; v = pv[v]) push = std::min(push, g.adj[pv[v]][pe[v]].cap);
        for (int v = t; v != s; v = pv[v]) {
            Edge& e = g.adj[pv[v]][pe[v]];
            e.cap -= push;
            g.adj[v][e.rev].cap += push;
        }
        total_cost += dist[t] * push;
    }
    return -total_cost; // profit
}

struct FlowResult {
    MatchingMatrix Q;
    double obj = 0.0;
};

FlowResult max_profit_flow(const IVec& rowcap, const IVec& colcap, const Vec& R, int m, int n,
                           const std::vector<char>* allowed) {
    int s = 0, t = m + n + 1;
    FlowGraph g(m + n + 2);
    for (int i = 0; i < m; ++i) g.add(s, 1 + i, rowcap[i], 0.0);
    // Remember where each cell edge sits to read the flow back.
    std::vector<int> cell_edge(static_cast<std::size_t>(m) * n, -1);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            std::size_t k = static_cast<std::size_t>(i) * n + j;
            if (allowed && !(*allowed)[k]) continue;
            int cap = std::min(rowcap[i], colcap[j]);
            if (cap <= 0) continue;
            cell_edge[k] = static_cast<int>(g.adj[1 + i].size());
            g.add(1 + i, 1 + m + j, cap, -R[k]);
        }
    for (int j = 0; j < n; ++j) g.add(1 + m + j, t, colcap[j], 0.0);

    FlowResult res;
    res.obj = run_profit_flow(g, s, t);
    res.Q = MatchingMatrix(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            std::size_t k = static_cast<std::size_t>(i) * n + j;
            if (cell_edge[k] < 0) continue;
            const Edge& e = g.adj[1 + i][cell_edge[k]];
            res.Q.at(i, j) = g.adj[e.to][e.rev].cap; // flow = reverse residual
        }
    return res;
}

} // namespace

MatchingMatrix solve_single_period_any(const State& x, const IVec& c, const Vec& R, int m, int n) {
    if (static_cast<int>(x.x.size()) != m || static_cast<int>(c.size()) != n ||
        R.size() != static_cast<std::size_t>(m) * n)
        throw std::invalid_argument("solve_single_period: shape mismatch");
    return max_profit_flow(x.x, c, R, m, n, nullptr).Q;
}

double single_period_objective(const State& x, const IVec& c, const Vec& R, int m, int n) {
    if (static_cast<int>(x.x.size()) != m || static_cast<int>(c.size()) != n ||
        R.size() != static_cast<std::size_t>(m) * n)
        throw std::invalid_argument("single_period_objective: shape mismatch");
    return max_profit_flow(x.x, c, R, m, n, nullptr).obj;
}

MatchingMatrix solve_single_period(const State& x, const IVec& c, const Vec& R, int m, int n) {
    if (static_cast<int>(x.x.size()) != m || static_cast<int>(c.size()) != n ||
        R.size() != static_cast<std::size_t>(m) * n)
        throw std::invalid_argument("solve_single_period: shape mismatch");
    FlowResult best = max_profit_flow(x.x, c, R, m, n, nullptr);
    const double tol = 1e-9 * (1.0 + std::abs(best.obj));

    // Lexicographic refinement: fix each cell, in row-major order, to the
    // smallest value that still admits an optimal completion of the rest.
    MatchingMatrix fixed(m, n);
    IVec rx = x.x, cc = c;
    std::vector<char> open(static_cast<std::size_t>(m) * n, 1);
    double fixed_profit = 0.0;
    MatchingMatrix witness = best.Q; // optimal completion of the open cells
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            std::size_t k = static_cast<std::size_t>(i) * n + j;
            open[k] = 0;
            int cur = witness.at(i, j);
            if (cur == 0) continue; // already minimal
            for (int v = 0; v <= cur; ++v) {
                IVec rx2 = rx, cc2 = cc;
                rx2[i] -= v;
                cc2[j] -= v;
                FlowResult rest = max_profit_flow(rx2, cc2, R, m, n, &open);
                if (fixed_profit + R[k] * v + rest.obj >= best.obj - tol) {
                    fixed.at(i, j) = v;
                    fixed_profit += R[k] * v;
                    rx[i] -= v;
                    cc[j] -= v;
                    witness = rest.Q; // carries minimal-candidate bounds forward
                    break;
                }
            }
        }
    return fixed;
}

} // namespace matchrl
