#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace seleval {

// Deterministic RNG used everywhere instead of <random> distributions:
// std::normal_distribution / uniform_real_distribution are implementation
// defined, which would break bit-for-bit reproducibility of seeded runs.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, bound), rejection sampled
    uint64_t uniform_int(uint64_t bound) {
        const uint64_t threshold = -bound % bound;
        for (;;) {
            const uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    // Box-Muller; one normal per call, spare discarded for stream simplicity
    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925287 * u2);
    }

private:
    uint64_t state_;
};

inline uint64_t hash_mix(uint64_t a, uint64_t b) {
    // xxhash-style avalanche of the combined words
    uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2);
    z ^= b;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace seleval
