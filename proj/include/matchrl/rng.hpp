#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace matchrl {

// Deterministic random stream. All distributions are derived from the raw
// mt19937_64 output by hand so that results are identical across standard
// library implementations.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // Uniform double in [0, 1) with 53 bits of randomness.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n-1].
    int uniform_int(int n) {
        return static_cast<int>(uniform() * static_cast<double>(n));
    }

    // Standard normal via Box-Muller; consumes exactly two uniforms per call.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Inverse-CDF draw from a probability vector over {0..pmf.size()-1}.
    int categorical(const std::vector<double>& pmf) {
        double u = uniform();
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < pmf.size(); ++k) {
            acc += pmf[k];
            if (u < acc) return static_cast<int>(k);
        }
        return static_cast<int>(pmf.size()) - 1;
    }

    // Independent child stream; used to hand each worker its own stream.
    RngStream spawn() { return RngStream(engine_() ^ 0x9e3779b97f4a7c15ULL); }

  private:
    std::mt19937_64 engine_;
};

} // namespace matchrl
