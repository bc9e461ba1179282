#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace matchrl {

struct EpisodeRow {
    int episode = 0; // 1-based, strictly increasing
    int steps = 0;
    double avg_q = 0.0;
    double episode_reward = 0.0;
    long long infeasible_action_count = 0;
    double beta = 0.0;
    double epsilon = 0.0;
    long long wall_ms = 0; // cumulative
};

// Per-episode metrics stream plus the terminal convergence summary.
struct RunRecord {
    std::vector<EpisodeRow> rows;
    bool converged = false;
    int episodes_to_convergence = -1;
    double time_to_convergence_s = -1.0;
    bool timed_out = false;

    void write_csv(const std::string& path, const std::string& manifest = "") const;
};

// Checkpoint series (episode, metric) sampled every 10 episodes. Convergence
// is declared at the first checkpoint closing a 3-checkpoint window whose
// relative changes are all below the threshold; a constant series converges
// at checkpoint 3.
std::pair<bool, int> convergence_detector(const std::vector<std::pair<int, double>>& checkpoints,
                                          double threshold);

std::string format_double(double v);

// FNV-1a over a config string; embedded in output file headers.
std::uint64_t manifest_hash(const std::string& text);

} // namespace matchrl
