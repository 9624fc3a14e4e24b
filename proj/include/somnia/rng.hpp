#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace somnia {

// Deterministic 64-bit generator (xorshift-multiply, splitmix64 stream).
// All randomness in the toolkit flows from one master seed through
// derive_seed(), so every artifact is reproducible from a single --seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without spare caching; two raw draws per sample keeps the
    // stream position independent of call history.
    double normal(double mean = 0.0, double sd = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(2.0 * M_PI * u2);
    }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo is fine here; n is always tiny vs 2^64.
        return n ? next_u64() % n : 0;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Geometric number of epochs with the given mean (>= 1), by inversion.
    int geometric_at_least_one(double mean) {
        if (mean <= 1.0) return 1;
        double p = 1.0 / mean;
        double u = uniform();
        if (u < 1e-300) u = 1e-300;
        int k = 1 + static_cast<int>(std::floor(std::log(u) / std::log(1.0 - p)));
        return k < 1 ? 1 : k;
    }

private:
    std::uint64_t state_;
};

// FNV-1a over a label; used to fan the master seed out per component and
// per session without correlated streams.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& label) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return master ^ h;
}

}  // namespace somnia
