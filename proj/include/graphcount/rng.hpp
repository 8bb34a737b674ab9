#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace graphcount {

// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// sampled streams do not depend on the standard library's distribution
// implementations; a given seed yields the same stream everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        // modulo bias is irrelevant at the span sizes used here
        return lo + static_cast<std::int64_t>(engine_() % span);
    }

    // standard normal via Box-Muller; caches the second deviate
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Mixes a base seed with stream identifiers (epoch, scene index, ...) so
// derived streams are independent and reproducible.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
    std::uint64_t x = a * 0x9e3779b97f4a7c15ull + b;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x += c;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

}  // namespace graphcount
