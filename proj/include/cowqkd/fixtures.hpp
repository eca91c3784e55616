#pragma once

#include <array>
#include <cstdint>

#include "cowqkd/channel.hpp"

namespace cowqkd::fixtures {

// One bundled experimental record: aggregate counts of a full run plus the
// published key rates for that distance (bps).
struct FixtureRow {
    double distance_km;
    std::uint64_t data_size; // pulses
    channel::CountsRecord counts;
    double rate_bps;
    double rate_refined_bps;
};

inline channel::CountsRecord make_counts(std::uint64_t N, double mu, std::uint64_t n_z,
                                         double E_z, std::uint64_t n00d0,
                                         std::uint64_t n00d1, std::uint64_t n00d1p,
                                         std::uint64_t n00d2, std::uint64_t n00d2p,
                                         std::uint64_t n0ad1, std::uint64_t n0ad2,
                                         std::uint64_t na0d1, std::uint64_t na0d2,
                                         std::uint64_t naad1, std::uint64_t naad2) {
    channel::CountsRecord r;
    r.N = N;
    r.mu = mu;
    r.n_z = n_z;
    r.E_z = E_z;
    r.n_00_d0 = n00d0;
    r.n_00_d1 = n00d1;
    r.n_00_d2 = n00d2;
    r.n_00_d1_refined = n00d1p;
    r.n_00_d2_refined = n00d2p;
    r.n_0a_d1 = n0ad1;
    r.n_0a_d2 = n0ad2;
    r.n_a0_d1 = na0d1;
    r.n_a0_d2 = na0d2;
    r.n_aa_d1 = naad1;
    r.n_aa_d2 = naad2;
    r.P_00 = 0.1;
    r.P_aa = 0.1;
    return r;
}

inline const FixtureRow& km25() {
    static const FixtureRow row{
        25.0, 100'000'000'000ULL,
        make_counts(100'000'000'000ULL, 3.50e-3, 25'278'913, 0.0030,
                    5409, 22843, 1904, 3751, 1904,
                    4'668'353, 4'209'875, 4'202'853, 4'654'407, 4'413'507, 9980),
        1.37e4, 2.53e4};
    return row;
}

inline const FixtureRow& km50() {
    static const FixtureRow row{
        50.0, 100'000'000'000ULL,
        make_counts(100'000'000'000ULL, 1.40e-3, 4'007'708, 0.0020,
                    230, 2194, 81, 566, 81,
                    742'102, 666'824, 661'568, 742'418, 692'141, 1190),
        2.47e3, 4.21e3};
    return row;
}

inline const FixtureRow& km75() {
    static const FixtureRow row{
        75.0, 1'000'000'000'000ULL,
        make_counts(1'000'000'000'000ULL, 5.65e-4, 6'432'214, 0.0034,
                    1572, 4942, 554, 1857, 554,
                    1'221'403, 1'067'140, 1'067'269, 1'221'586, 1'121'394, 4228),
        2.82e2, 5.31e2};
    return row;
}

inline const FixtureRow& km100() {
    static const FixtureRow row{
        100.0, 1'000'000'000'000ULL,
        make_counts(1'000'000'000'000ULL, 2.43e-4, 1'077'297, 0.0076,
                    1399, 840, 493, 1058, 493,
                    192'729, 172'140, 182'993, 204'693, 190'418, 1571),
        12.8, 29.0};
    return row;
}

inline const std::array<const FixtureRow*, 4>& all() {
    static const std::array<const FixtureRow*, 4> rows = {&km25(), &km50(), &km75(),
                                                          &km100()};
    return rows;
}

inline const FixtureRow* by_distance(double km) {
    for (const auto* r : all())
        if (std::abs(r->distance_km - km) < 1e-9) return r;
    return nullptr;
}

// Measured reconciliation leakage of the 100 km run (bits).
inline constexpr std::uint64_t kLeakEcMeasured100km = 74'145;
// Encrypted-transfer demonstration: 6.13 kByte file, 50,296-bit pad.
inline constexpr std::uint64_t kDemoFileBits = 50'296;

} // namespace cowqkd::fixtures
