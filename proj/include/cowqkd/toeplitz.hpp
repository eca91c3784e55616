#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cowqkd/bitvec.hpp"
#include "cowqkd/rng.hpp"

namespace cowqkd::pa {

// m x n binary Toeplitz matrix T with T[i][j] = t_{m-i+j} (1-based), built
// from m+n-1 seed bits t_1 .. t_{m+n-1}; row 1 is (t_m ... t_{m+n-1}).
struct ToeplitzSpec {
    std::size_t n = 0; // input length
    std::size_t m = 0; // output length
    BitVec seed;       // exactly m + n - 1 bits

    void validate() const {
        if (m < 1 || m > n) throw std::invalid_argument("ToeplitzSpec: need 1 <= m <= n");
        if (seed.size() != m + n - 1)
            throw std::invalid_argument("ToeplitzSpec: seed must have m+n-1 bits");
    }

    static ToeplitzSpec random(std::size_t n, std::size_t m, Xoshiro256& rng) {
        ToeplitzSpec s;
        s.n = n;
        s.m = m;
        s.seed = BitVec(m + n - 1);
        for (std::size_t i = 0; i < s.seed.size(); ++i) s.seed.set(i, rng.next() & 1u);
        return s;
    }
};

// Reference path: explicit row dot products over GF(2). Output bit i is the
// convolution coefficient sum_{a+b = m+n-2-i} t[a] d[b], i.e. row i of T
// dotted with the key block in transmission order (most recent bit first).
inline BitVec toeplitz_direct(const ToeplitzSpec& spec, const BitVec& key) {
    spec.validate();
    if (key.size() != spec.n)
        throw std::invalid_argument("toeplitz_direct: key length mismatch");
    const std::size_t m = spec.m, n = spec.n;
    // With rev_t[x] = t[m+n-2-x] the output is the sliding parity
    // B[i] = XOR_b rev_t[i+b] & d[b].
    BitVec rev_t(m + n - 1);
    for (std::size_t x = 0; x < m + n - 1; ++x) rev_t.set(x, spec.seed[m + n - 2 - x]);

    const auto& dw = key.words();
    BitVec out(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::uint64_t acc = 0;
        for (std::size_t w = 0; w * 64 < n; ++w) {
            const std::size_t off = i + w * 64;
            // 64-bit window of rev_t starting at off
            const auto& tw = rev_t.words();
            std::uint64_t window = tw[off >> 6] >> (off & 63);
            if ((off & 63) && (off >> 6) + 1 < tw.size())
                window |= tw[(off >> 6) + 1] << (64 - (off & 63));
            acc ^= window & dw[w];
        }
        out.set(i, std::popcount(acc) & 1u);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exact transform path
// ---------------------------------------------------------------------------
// The m x n Toeplitz product embeds into a cyclic convolution of the seed
// with the zero-padded key; the needed coefficient range [n-1, m+n-2] never
// aliases for cyclic length >= m+n-1. The convolution is computed exactly
// with a number-theoretic transform over p = 29 * 2^57 + 1 (root 3), so the
// final mod-2 reduction is bit-exact. Padded to the next power of two.

namespace ntt {

inline constexpr std::uint64_t kPrime = 4179340454199820289ULL; // 29 * 2^57 + 1
inline constexpr std::uint64_t kRoot = 3;

inline std::uint64_t mulmod(std::uint64_t a, std::uint64_t b) {
    return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % kPrime);
}

inline std::uint64_t powmod(std::uint64_t base, std::uint64_t e) {
    std::uint64_t r = 1;
    while (e) {
        if (e & 1) r = mulmod(r, base);
        base = mulmod(base, base);
        e >>= 1;
    }
    return r;
}

inline void transform(std::vector<std::uint64_t>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        std::uint64_t w = powmod(kRoot, (kPrime - 1) / len);
        if (inverse) w = powmod(w, kPrime - 2);
        for (std::size_t i = 0; i < n; i += len) {
            std::uint64_t cur = 1;
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::uint64_t u = a[i + k];
                const std::uint64_t v = mulmod(a[i + k + len / 2], cur);
                a[i + k] = u + v < kPrime ? u + v : u + v - kPrime;
                a[i + k + len / 2] = u >= v ? u - v : u + kPrime - v;
                cur = mulmod(cur, w);
            }
        }
    }
    if (inverse) {
        const std::uint64_t inv_n = powmod(n, kPrime - 2);
        for (auto& x : a) x = mulmod(x, inv_n);
    }
}

} // namespace ntt

inline BitVec toeplitz_fft(const ToeplitzSpec& spec, const BitVec& key) {
    spec.validate();
    if (key.size() != spec.n)
        throw std::invalid_argument("toeplitz_fft: key length mismatch");
    const std::size_t m = spec.m, n = spec.n;
    const std::size_t conv_len = m + n - 1;
    std::size_t size = 1;
    while (size < conv_len) size <<= 1;

    std::vector<std::uint64_t> a(size, 0), b(size, 0);
    for (std::size_t i = 0; i < conv_len; ++i) a[i] = spec.seed[i];
    for (std::size_t i = 0; i < n; ++i) b[i] = key[i];
    ntt::transform(a, false);
    ntt::transform(b, false);
    for (std::size_t i = 0; i < size; ++i) a[i] = ntt::mulmod(a[i], b[i]);
    ntt::transform(a, true);

    BitVec out(m);
    for (std::size_t i = 0; i < m; ++i) out.set(i, a[conv_len - 1 - i] & 1u);
    return out;
}

// Privacy amplification of a reconciled key down to l bits. The seed is
// generated by the caller's RNG (by convention the sender's) and must be
// shared with the peer verbatim.
struct PaResult {
    BitVec final_key;
    ToeplitzSpec spec;
};

inline PaResult pa_extract(const BitVec& raw_key, std::uint64_t l, Xoshiro256& seed_source) {
    if (l > raw_key.size())
        throw std::invalid_argument("pa_extract: requested length exceeds key");
    PaResult r;
    if (l == 0) return r;
    r.spec = ToeplitzSpec::random(raw_key.size(), l, seed_source);
    r.final_key = toeplitz_fft(r.spec, raw_key);
    return r;
}

inline BitVec pa_extract_with_seed(const BitVec& raw_key, const ToeplitzSpec& spec) {
    if (spec.m == 0) return BitVec();
    return toeplitz_fft(spec, raw_key);
}

// 64-bit universal-hash tag used by the verification steps.
inline std::uint64_t toeplitz_tag64(const BitVec& data, std::uint64_t seed) {
    if (data.size() == 0) return 0;
    Xoshiro256 rng(seed);
    const std::size_t m = std::min<std::size_t>(64, data.size());
    ToeplitzSpec spec = ToeplitzSpec::random(data.size(), m, rng);
    BitVec tag = toeplitz_direct(spec, data);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < tag.size(); ++i) v |= static_cast<std::uint64_t>(tag[i]) << i;
    return v;
}

} // namespace cowqkd::pa
