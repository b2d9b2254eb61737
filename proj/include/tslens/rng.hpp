#pragma once

#include <cmath>
#include <cstdint>

namespace tslens {

// SplitMix64. The exact stepping is part of the artifact contract so that
// datasets and weights are reproducible across implementations.
struct Rng {
    std::uint64_t state = 0;

    explicit Rng(std::uint64_t seed = 0) : state(seed) {}

    std::uint64_t next_u64() {
        state += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state;
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + next_double() * (hi - lo);
    }

    // Box-Muller, cosine branch only. Two draws per variate keeps the draw
    // count independent of call parity.
    double gaussian(double mean = 0.0, double stdev = 1.0) {
        double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
        double u2 = next_double();
        double z = std::sqrt(-2.0 * std::log(u1)) *
                   std::cos(2.0 * 3.14159265358979323846 * u2);
        return mean + stdev * z;
    }

    // Deterministic per-row child generator: child_state = SplitMix64(seed ^ row).
    static Rng child(std::uint64_t seed, std::uint64_t index) {
        Rng mixer(seed ^ index);
        return Rng(mixer.next_u64());
    }
};

}  // namespace tslens
