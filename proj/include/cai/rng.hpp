#pragma once

// Splittable counter-based PRNG. A master seed plus a path of stream
// indices identifies an independent stream; the same (seed, path) always
// reproduces the same sequence, so any sub-computation can be replayed
// bit-for-bit regardless of scheduling.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace cai {

inline std::uint64_t mix64(std::uint64_t z) {
    // splitmix64 finalizer (Steele/Lea/Flood)
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix64(seed)) {}

    // Derive an independent stream from a master seed and a path of indices.
    static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        std::uint64_t s = mix64(seed);
        for (std::uint64_t p : path) s = mix64(s ^ mix64(p ^ 0xd1b54a32d192ed03ull));
        Rng r(0);
        r.state_ = s;
        return r;
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform on [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), n >= 1. Rejection-free multiply-shift is
    // biased by at most 2^-64 per draw; fine at our draw counts, but use
    // rejection anyway so exhaustive small-n tests are exact.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t lim = (~0ull) - (~0ull) % n;
        std::uint64_t x;
        do { x = next_u64(); } while (x >= lim);
        return x % n;
    }

    // Standard normal via Box-Muller (deterministic across platforms,
    // unlike std::normal_distribution).
    double normal() {
        double u1;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::uint64_t state_;
};

// Inverse-CDF draw from a discrete pmf given a single uniform.
inline int draw_index(const std::vector<double>& probs, double u) {
    double c = 0.0;
    const int n = static_cast<int>(probs.size());
    for (int i = 0; i < n; ++i) {
        c += probs[i];
        if (u < c) return i;
    }
    return n - 1;  // guard against roundoff at u ~ 1
}

}  // namespace cai
