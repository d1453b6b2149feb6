#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ihas {

// Counter-based splitmix64 stream. The (seed, number of draws) pair fully
// determines every output, independent of platform or stdlib version, which
// is what the reproducibility contract and bit-exact checkpoints rely on.
class RngStream {
public:
    RngStream() : RngStream(0) {}
    explicit RngStream(std::uint64_t seed) : seed_(seed), counter_(0) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    // Restores a stream mid-sequence (used when loading checkpoints).
    static RngStream resume(std::uint64_t seed, std::uint64_t counter) {
        RngStream r(seed);
        r.counter_ = counter;
        return r;
    }

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Index in [0, n).
    std::size_t next_index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    // Box-Muller; draws two uniforms per call and keeps only one so the
    // stream position stays a simple function of the call count.
    double normal(double mean, double stddev) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }

    // Gumbel(0,1): -log(-log(U)), U clamped away from {0,1}.
    double gumbel() {
        double u = uniform();
        if (u < 1e-12) u = 1e-12;
        if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
        return -std::log(-std::log(u));
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

// FNV-1a, used to derive purpose-specific seeds and to fingerprint inputs.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Independent stream for a named purpose within one run.
inline RngStream derive_stream(std::uint64_t base_seed, std::string_view purpose) {
    return RngStream(base_seed ^ fnv1a(purpose));
}

} // namespace ihas
