#include "matchrl/record.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <fstream>
#include <stdexcept>

namespace matchrl {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void RunRecord::write_csv(const std::string& path, const std::string& manifest) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("RunRecord: cannot open " + path);
    if (!manifest.empty()) out << "# manifest=" << manifest << "\n";
    out << "episode,steps,avg_Q,episode_reward,infeasible_action_count,beta,epsilon,wall_ms\n";
    for (const EpisodeRow& r : rows) {
        out << r.episode << ',' << r.steps << ',' << format_double(r.avg_q) << ','
            << format_double(r.episode_reward) << ',' << r.infeasible_action_count << ','
            << format_double(r.beta) << ',' << format_double(r.epsilon) << ',' << r.wall_ms
            << "\n";
    }
    out << "# converged=" << (converged ? 1 : 0)
        << " episodes_to_convergence=" << episodes_to_convergence
        << " time_to_convergence_s=" << format_double(time_to_convergence_s)
        << " timed_out=" << (timed_out ? 1 : 0) << "\n";
}

std::pair<bool, int> convergence_detector(const std::vector<std::pair<int, double>>& checkpoints,
                                          double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("convergence_detector: threshold must be in (0,1)");
    int consecutive = 0;
    for (std::size_t k = 1; k < checkpoints.size(); ++k) {
        double prev = checkpoints[k - 1].second;
        double cur = checkpoints[k].second;
        double change;
        if (prev == 0.0)
            change = (cur == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
        else
            change = std::abs(cur - prev) / std::abs(prev);
        if (change < threshold) {
            ++consecutive;
            if (consecutive >= 2) // two sub-threshold steps close a 3-checkpoint window
                return {true, checkpoints[k].first};
        } else {
            consecutive = 0;
        }
    }
    return {false, -1};
}

std::uint64_t manifest_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace matchrl
