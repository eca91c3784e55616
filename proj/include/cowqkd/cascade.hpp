#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "cowqkd/bitvec.hpp"
#include "cowqkd/rng.hpp"

namespace cowqkd::cascade {

// Block-length progression across rounds. Halving follows the interactive
// protocol description; doubling is the classic low-leak variant, available
// for comparison runs.
enum class BlockSchedule { halving, doubling };

struct CascadeConfig {
    double K = 0.73;               // block-length parameter
    int rounds = 3;                // < 4 in practice
    std::size_t frame_bits = std::size_t{1} << 20;
    std::vector<std::uint64_t> shuffle_seeds; // one per round
    bool identity_first_round = false;
    BlockSchedule schedule = BlockSchedule::halving;

    void validate() const {
        if (!(K > 0.0 && K <= 1.0)) throw std::invalid_argument("CascadeConfig: K outside (0,1]");
        if (rounds < 1) throw std::invalid_argument("CascadeConfig: rounds must be >= 1");
        if (frame_bits < 64) throw std::invalid_argument("CascadeConfig: frame_bits < 64");
    }
};

// Block length of the first round: ceil(K/E), clamped to [2, frame_bits].
// E == 0 falls back to the one-error-per-frame floor 1/frame_bits.
inline std::size_t initial_block_len(double e_rate, double K, std::size_t frame_bits) {
    if (e_rate < 0.0 || e_rate >= 1.0)
        throw std::invalid_argument("initial_block_len: error rate outside [0,1)");
    if (e_rate == 0.0) e_rate = 1.0 / static_cast<double>(frame_bits);
    const double raw = std::ceil(K / e_rate);
    const double clamped = std::clamp(raw, 2.0, static_cast<double>(frame_bits));
    return static_cast<std::size_t>(clamped);
}

// Deterministic Fisher-Yates permutation driven by xoshiro256**; perm[i] is
// the source index of permuted position i. Both endpoints derive identical
// permutations from the shared per-round seed.
inline std::vector<std::uint32_t> shuffle_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    Xoshiro256 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

// One block-parity query: positions [begin, end) of round `round`'s permuted
// order. The oracle answers with the parity of the reference key.
struct BlockRef {
    std::uint32_t round;
    std::uint64_t begin;
    std::uint64_t end;
};

class ParityOracle {
public:
    virtual ~ParityOracle() = default;
    virtual std::vector<std::uint8_t> parities(const std::vector<BlockRef>& blocks) = 0;
};

// Oracle over a locally held reference key (the sender's side of the pair).
class LocalParityOracle : public ParityOracle {
public:
    LocalParityOracle(const BitVec& reference, const CascadeConfig& config)
        : key_(reference), config_(config) {}

    std::vector<std::uint8_t> parities(const std::vector<BlockRef>& blocks) override {
        std::vector<std::uint8_t> out;
        out.reserve(blocks.size());
        for (const auto& b : blocks) {
            const auto& perm = permutation(b.round);
            std::uint8_t p = 0;
            for (std::uint64_t i = b.begin; i < b.end; ++i) p ^= key_[perm[i]];
            out.push_back(p);
        }
        return out;
    }

private:
    const std::vector<std::uint32_t>& permutation(std::uint32_t round) {
        while (perms_.size() <= round) {
            const std::uint32_t r = static_cast<std::uint32_t>(perms_.size());
            if (r == 0 && config_.identity_first_round) {
                std::vector<std::uint32_t> id(key_.size());
                std::iota(id.begin(), id.end(), 0u);
                perms_.push_back(std::move(id));
            } else {
                const std::uint64_t seed =
                    r < config_.shuffle_seeds.size() ? config_.shuffle_seeds[r] : r + 1;
                perms_.push_back(shuffle_permutation(key_.size(), seed));
            }
        }
        return perms_[round];
    }

    BitVec key_;
    CascadeConfig config_;
    std::vector<std::vector<std::uint32_t>> perms_;
};

struct ReconciliationResult {
    BitVec corrected_key;
    std::uint64_t disclosed_bits = 0; // every parity bit received
    int rounds_executed = 0;
    std::size_t flips = 0;
    double residual_error_estimate = 0.0;
};

namespace detail {

struct RoundState {
    std::vector<std::uint32_t> perm;     // permuted pos -> source index
    std::vector<std::uint32_t> inv_perm; // source index -> permuted pos
    std::size_t block_len = 0;
    std::vector<std::uint8_t> diff; // current parity mismatch per block
};

} // namespace detail

// Interactive reconciliation of `noisy_key` against the oracle's reference.
// Round 1 compares shuffled block parities and binary-searches mismatches;
// later rounds halve the block length, reshuffle, and backtrack every earlier
// round's block that contains a freshly corrected bit.
inline ReconciliationResult reconcile(const BitVec& noisy_key, ParityOracle& oracle,
                                      const CascadeConfig& config, double e_rate) {
    config.validate();
    const std::size_t n = noisy_key.size();
    if (n == 0) return {noisy_key, 0, 0, 0, 0.0};
    if (n > config.frame_bits)
        throw std::invalid_argument("reconcile: key exceeds frame_bits; chunk the input");

    ReconciliationResult res;
    res.corrected_key = noisy_key;
    BitVec& key = res.corrected_key;

    std::vector<detail::RoundState> rounds;
    std::deque<std::pair<std::uint32_t, std::uint64_t>> worklist;

    auto bob_parity = [&](const detail::RoundState& rs, std::uint64_t begin,
                          std::uint64_t end) {
        std::uint8_t p = 0;
        for (std::uint64_t i = begin; i < end; ++i) p ^= key[rs.perm[i]];
        return p;
    };

    auto flip_source_bit = [&](std::uint32_t source) {
        key.flip(source);
        ++res.flips;
        for (std::uint32_t r = 0; r < rounds.size(); ++r) {
            auto& rs = rounds[r];
            const std::uint64_t blk = rs.inv_perm[source] / rs.block_len;
            rs.diff[blk] ^= 1;
            if (rs.diff[blk]) worklist.emplace_back(r, blk);
        }
    };

    // Binary search one odd block down to the mismatching bit.
    auto search_block = [&](std::uint32_t r, std::uint64_t blk) {
        auto& rs = rounds[r];
        std::uint64_t lo = blk * rs.block_len;
        std::uint64_t hi = std::min<std::uint64_t>(lo + rs.block_len, n);
        while (hi - lo > 1) {
            const std::uint64_t mid = lo + (hi - lo) / 2;
            auto ap = oracle.parities({BlockRef{r, lo, mid}});
            res.disclosed_bits += 1;
            if (bob_parity(rs, lo, mid) != ap[0]) hi = mid;
            else lo = mid;
        }
        flip_source_bit(rs.perm[lo]);
    };

    std::size_t block_len = initial_block_len(e_rate, config.K, config.frame_bits);
    for (int r = 0; r < config.rounds; ++r) {
        detail::RoundState rs;
        if (r == 0 && config.identity_first_round) {
            rs.perm.resize(n);
            std::iota(rs.perm.begin(), rs.perm.end(), 0u);
        } else {
            const std::uint64_t seed = static_cast<std::size_t>(r) < config.shuffle_seeds.size()
                                           ? config.shuffle_seeds[r]
                                           : static_cast<std::uint64_t>(r) + 1;
            rs.perm = shuffle_permutation(n, seed);
        }
        rs.inv_perm.resize(n);
        for (std::uint32_t i = 0; i < n; ++i) rs.inv_perm[rs.perm[i]] = i;
        rs.block_len = std::max<std::size_t>(2, block_len);

        const std::uint64_t nblocks = (n + rs.block_len - 1) / rs.block_len;
        std::vector<BlockRef> refs;
        refs.reserve(nblocks);
        for (std::uint64_t b = 0; b < nblocks; ++b)
            refs.push_back({static_cast<std::uint32_t>(r), b * rs.block_len,
                            std::min<std::uint64_t>((b + 1) * rs.block_len, n)});
        auto alice = oracle.parities(refs);
        res.disclosed_bits += alice.size();

        rs.diff.resize(nblocks);
        rounds.push_back(std::move(rs));
        auto& cur = rounds.back();
        for (std::uint64_t b = 0; b < nblocks; ++b) {
            cur.diff[b] = bob_parity(cur, refs[b].begin, refs[b].end) ^ alice[b];
            if (cur.diff[b]) worklist.emplace_back(r, b);
        }

        while (!worklist.empty()) {
            auto [wr, wb] = worklist.front();
            worklist.pop_front();
            if (!rounds[wr].diff[wb]) continue; // resolved by an earlier flip
            search_block(wr, wb);
        }
        res.rounds_executed = r + 1;
        block_len = config.schedule == BlockSchedule::halving
                        ? std::max<std::size_t>(2, (block_len + 1) / 2)
                        : std::min<std::size_t>(n, block_len * 2);
    }

    const double expected_errors = e_rate * static_cast<double>(n);
    res.residual_error_estimate =
        std::max(0.0, expected_errors - static_cast<double>(res.flips)) /
        static_cast<double>(n);
    return res;
}

} // namespace cowqkd::cascade
