#pragma once

// Shared helpers for the finite-key soundness checks: synthetic count records
// whose ground-truth virtual-state counts are known exactly from the optics
// model.

#include <cmath>

#include "cowqkd/channel.hpp"
#include "cowqkd/core.hpp"
#include "cowqkd/quantum.hpp"

namespace harness {

using namespace cowqkd;

struct SyntheticRun {
    channel::CountsRecord counts;
    double true_n0x_d1; // exact expected virtual-state counts, Z-round ensemble
    double true_n0x_d2;
};

inline SyntheticRun synthetic_from_oracle(double mu, double transmittance, double visibility,
                                          double rounds) {
    ProtocolParams pr;
    pr.mu = mu;
    quantum::OpticalPath path;
    path.transmittance = transmittance;
    path.visibility = visibility;
    path.detector_eff = {0.762, 0.46, 0.46};
    path.dark_prob = {5.6e-9, 8e-10, 8.8e-9};
    path.z_split = 0.30;

    auto p = [&](const quantum::CoherentSuperposition& st) {
        return quantum::click_probabilities(st, path);
    };
    const auto c0z = p(quantum::CoherentSuperposition::z0(mu));
    const auto c1z = p(quantum::CoherentSuperposition::z1(mu));
    const auto cv = p(quantum::CoherentSuperposition::vacuum_pair());
    const auto cb = p(quantum::CoherentSuperposition::bright_pair(mu));

    SyntheticRun out;
    auto& c = out.counts;
    c.N = static_cast<std::uint64_t>(2.0 * rounds);
    c.mu = mu;
    c.P_00 = pr.p_0;
    c.P_aa = pr.p_alpha_alpha;
    auto cnt = [&](double pst, double prob) {
        return static_cast<std::uint64_t>(std::llround(rounds * pst * prob));
    };
    c.n_0a_d1 = cnt(pr.p_z / 2, c0z.d1_only);
    c.n_0a_d2 = cnt(pr.p_z / 2, c0z.d2_only);
    c.n_a0_d1 = cnt(pr.p_z / 2, c1z.d1_only);
    c.n_a0_d2 = cnt(pr.p_z / 2, c1z.d2_only);
    c.n_00_d1 = cnt(pr.p_0, cv.d1_only);
    c.n_00_d2 = cnt(pr.p_0, cv.d2_only);
    c.n_00_d0 = cnt(pr.p_0, cv.d0_early_only + cv.d0_late_only);
    c.n_aa_d1 = cnt(pr.p_alpha_alpha, cb.d1_only);
    c.n_aa_d2 = cnt(pr.p_alpha_alpha, cb.d2_only);
    c.n_z = cnt(pr.p_z, 0.5 * (c0z.d0_early_only + c0z.d0_late_only) +
                            0.5 * (c1z.d0_early_only + c1z.d0_late_only));
    if (c.n_z == 0) c.n_z = 1;
    c.E_z = 0.01;

    auto v = quantum::expected_counts_virtual(pr, path, rounds * pr.p_z);
    out.true_n0x_d1 = v.n_0x_d1;
    out.true_n0x_d2 = v.n_0x_d2;
    return out;
}

} // namespace harness
