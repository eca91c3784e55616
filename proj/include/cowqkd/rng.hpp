#pragma once

#include <cmath>
#include <cstdint>

namespace cowqkd {

// splitmix64, used for seeding and stream derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** 1.0. This is the generator both endpoints of a session must
// agree on; the exact update rule is documented in docs/formats.md and pinned
// by unit tests.
class Xoshiro256 {
public:
    explicit Xoshiro256(std::uint64_t seed = 0x7c0ffee123456789ULL) {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64(sm);
    }

    // Derives an independent substream, e.g. per parallel block.
    static Xoshiro256 substream(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t sm = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        Xoshiro256 g(0);
        for (auto& word : g.s_) word = splitmix64(sm);
        return g;
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform double in [0,1) with 53 bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound) by rejection (unbiased).
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) return 0;
        std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    bool coin(double p) { return uniform() < p; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
};

// Exact binomial sampler by mode-centered enumeration for means up to
// `kExactLimit`; Gaussian approximation with continuity correction above
// (skew error there is below 1e-3 sigma). Deterministic for a given
// generator state, one uniform consumed per exact draw.
class BinomialSampler {
public:
    static constexpr double kExactLimit = 1.0e7;

    static std::uint64_t sample(Xoshiro256& rng, std::uint64_t n, double p) {
        if (n == 0 || p <= 0.0) return 0;
        if (p >= 1.0) return n;
        const double mean = static_cast<double>(n) * p;
        const double meanc = static_cast<double>(n) * (1.0 - p);
        if (mean <= kExactLimit || meanc <= kExactLimit)
            return mode_enumeration(rng, n, p);
        const double sd = std::sqrt(mean * (1.0 - p));
        double v = std::round(mean + sd * gaussian(rng));
        if (v < 0) v = 0;
        double nmax = static_cast<double>(n);
        if (v > nmax) v = nmax;
        return static_cast<std::uint64_t>(v);
    }

private:
    static double log_pmf(std::uint64_t n, double p, std::uint64_t k) {
        double nn = static_cast<double>(n), kk = static_cast<double>(k);
        return std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0)
             + kk * std::log(p) + (nn - kk) * std::log1p(-p);
    }

    // Enumerates atoms outward from the mode against one uniform. Any fixed
    // enumeration order of disjoint atoms yields the exact distribution.
    static std::uint64_t mode_enumeration(Xoshiro256& rng, std::uint64_t n, double p) {
        const double u = rng.uniform();
        std::uint64_t mode = static_cast<std::uint64_t>((static_cast<double>(n) + 1.0) * p);
        if (mode > n) mode = n;
        const double ratio = p / (1.0 - p);
        double pmf_up = std::exp(log_pmf(n, p, mode));
        double pmf_dn = pmf_up;
        double cum = pmf_up;
        if (u <= cum) return mode;
        std::uint64_t hi = mode, lo = mode;
        for (;;) {
            bool moved = false;
            if (hi < n) {
                pmf_up *= ratio * static_cast<double>(n - hi) / static_cast<double>(hi + 1);
                ++hi;
                cum += pmf_up;
                if (u <= cum) return hi;
                moved = true;
            }
            if (lo > 0) {
                pmf_dn *= static_cast<double>(lo) / (ratio * static_cast<double>(n - lo + 1));
                --lo;
                cum += pmf_dn;
                if (u <= cum) return lo;
                moved = true;
            }
            if (!moved) return mode; // u in the last sliver of rounding error
        }
    }

    static double gaussian(Xoshiro256& rng) {
        // Box-Muller; consumes two uniforms.
        double u1 = rng.uniform();
        double u2 = rng.uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }
};

} // namespace cowqkd
