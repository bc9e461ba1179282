#pragma once

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "matchrl/core.hpp"
#include "matchrl/mlp.hpp"
#include "matchrl/record.hpp"
#include "matchrl/rng.hpp"
#include "matchrl/tabular.hpp"

namespace matchrl {

struct Experience {
    Vec s;        // normalized state, length m
    Vec a;        // executed action probability vector, length m*n
    double r = 0.0;
    Vec s2;       // normalized next state
    IVec x2_raw;  // next state in integer units, for prior lookups
};

// Bounded FIFO with uniform sampling; eviction strictly oldest-first.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity = 1'000'000) : capacity_(capacity) {}

    void push(Experience e);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    // Logical index: 0 is the oldest element currently stored.
    const Experience& at(std::size_t i) const { return data_[(head_ + i) % data_.size()]; }
    std::vector<const Experience*> sample(std::size_t n, RngStream& rng) const;

  private:
    std::size_t capacity_;
    std::size_t head_ = 0; // oldest element when full
    std::vector<Experience> data_;
};

struct ExplorationSchedule {
    double eps_start = 1.0;
    double eps_floor = 0.1;
    int anneal_episodes = 300; // 300 small / 1000 large
    double noise_sigma = 0.1;

    // eps(e) = max(floor, start * (floor/start)^(e/anneal)); exponential.
    double epsilon(int episode) const;
};

struct AgentPair {
    Mlp actor, critic, target_actor, target_critic;
    OptimizerState actor_opt, critic_opt;
    double tau = 5e-4;
};

// Actor [m,50,200,100,m*n] with softmax head; critic takes the state
// concatenated with the action vector through [.,50,100,200] plus a width-1
// linear head. Final layers initialized uniform in +-0.003.
AgentPair make_agent(const ProblemInstance& inst, double actor_lr, double critic_lr, double tau,
                     RngStream& rng);

// Reshape row-major, normalize rows (zero rows stay zero), scale row i by
// x_i, round half-up, then decrement largest-residual cells until every row
// sum is within x_i.
MatchingMatrix transform_action(const Vec& probs, const State& x, int n);

Vec normalize_state(const State& x, int demand_limit);

// Epsilon-greedy actor action with Gaussian perturbation of the probability
// vector during exploration. Returns the executed probability vector and the
// transformed integer matrix.
std::pair<Vec, MatchingMatrix> select_action(const AgentPair& agent, const ProblemInstance& inst,
                                             const State& x, const ExplorationSchedule& schedule,
                                             int episode, RngStream& rng);

// Prior probability vector over the m*n cells for a raw next state.
using DeepPriorFn = std::function<Vec(const IVec&)>;

// Single-period optimal matching normalized row-wise by x_i, memoized.
class SinglePeriodPrior {
  public:
    explicit SinglePeriodPrior(const ProblemInstance& inst) : inst_(inst) {}
    Vec operator()(const IVec& x_raw);

  private:
    ProblemInstance inst_;
    std::unordered_map<std::string, Vec> cache_;
};

// y_i = r_i + gamma * [ g(a+)/beta + Q'(s_{i+1}, a+) ] with a+ the target
// actor's action; plain DDPG is the beta -> infinity special case.
Vec compute_dk_target(const std::vector<const Experience*>& batch, const AgentPair& agent,
                      double gamma, double beta, const DeepPriorFn& prior,
                      const DivergenceSpec& spec);

// One optimizer step on the mean squared Bellman error; returns the pre-step loss.
double critic_update(AgentPair& agent, const std::vector<const Experience*>& batch,
                     const Vec& targets);

// Gradient of (1/N) sum Q(s_i, actor(s_i)) with respect to the actor
// parameters, and the objective value. Exposed for oracle tests.
GradRecord actor_gradient(const AgentPair& agent, const std::vector<const Experience*>& batch,
                          double* objective);

// One ascent step on the sampled policy gradient; returns the pre-step objective.
double actor_update(AgentPair& agent, const std::vector<const Experience*>& batch);

void soft_update(AgentPair& agent, double tau);

enum class DeepMethod { DDPG, DKDDPG };

struct DeepConfig {
    double actor_lr = 1e-4;
    double critic_lr = 5e-4;
    double tau = 5e-4;
    std::size_t batch_size = 64;
    std::size_t replay_capacity = 1'000'000;
    int episode_cap = 3000;
    int step_cap = 500;
    double convergence_threshold = 0.02;
    int checkpoint_interval = 10;
    std::size_t avg_q_sample_cap = 512;
    ExplorationSchedule exploration;
    double wall_clock_cap_s = 0.0; // 0 = unlimited
};

struct DeepResult {
    AgentPair agent;
    RunRecord record;
};

// Full training loop; DDPG runs the identical code path with beta fixed at
// 1e12, so the two methods are bit-identical under a shared seed at huge beta.
DeepResult train_agent(const ProblemInstance& inst, const DeepConfig& config, DeepMethod method,
                       const BetaSchedule& beta_schedule, const DivergenceSpec& spec,
                       RngStream& rng);

// Mean critic value over truncated states (seeded uniform sample beyond the cap).
double deep_average_q(const AgentPair& agent, const ProblemInstance& inst,
                      std::size_t sample_cap, std::uint64_t sample_seed = 0xa55e55ULL);

// Probe each kappa candidate with a short DKDDPG run from the same seed and
// return the candidate with the highest total episodic reward (first index
// wins ties).
double kappa_search(const ProblemInstance& inst, const DeepConfig& config,
                    const std::vector<double>& candidates, int probe_episodes,
                    std::uint64_t seed);

std::string agent_to_json(const AgentPair& agent, const BetaSchedule& beta,
                          const ExplorationSchedule& eps, std::uint64_t seed,
                          const std::string& instance_hash);
AgentPair agent_from_json(const std::string& text, double actor_lr = 1e-4,
                          double critic_lr = 5e-4);

} // namespace matchrl
