#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cowqkd/finitekey.hpp"
#include "cowqkd/fixtures.hpp"
#include "cowqkd/io_json.hpp"
#include "harness.hpp"

using namespace cowqkd;
using namespace cowqkd::fk;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("refined counts reproduce the published substitution rows") {
    struct Row {
        const fixtures::FixtureRow* fx;
        long long published;
    };
    const Row rows[] = {{&fixtures::km25(), 1904},
                        {&fixtures::km50(), 81},
                        {&fixtures::km75(), 554},
                        {&fixtures::km100(), 493}};
    for (const auto& row : rows) {
        auto refined = refine_counts(row.fx->counts);
        CHECK(std::llabs(static_cast<long long>(refined.n_00_d1) - row.published) <= 1);
        CHECK(refined.n_00_d1 == refined.n_00_d2);
        REQUIRE(refined.n_00_d1_raw.has_value());
        CHECK(*refined.n_00_d1_raw == row.fx->counts.n_00_d1);
    }
    channel::CountsRecord zero = fixtures::km25().counts;
    zero.n_00_d0 = 0;
    CHECK(refine_counts(zero).n_00_d1 == 0);
}

TEST_CASE("monitor expectation bounds straddle the observation") {
    const auto& counts = fixtures::km100().counts;
    auto budget = epsilon_budget(SecurityParams{});
    auto mb = bound_monitor_expectations(counts, budget);
    const double n = 190418;
    CHECK(mb.up_aa_d1 > n);
    CHECK(mb.lo_aa_d1 < n);
    const double five_sqrt_k = 5 * std::sqrt(static_cast<double>(counts.rounds()));
    CHECK(mb.up_aa_d1 - n < five_sqrt_k);
    CHECK(n - mb.lo_aa_d1 < five_sqrt_k);
    // golden widths (60-digit evaluation)
    CHECK_THAT(mb.d_up_aa_d1, WithinRel(3100.5445724562163, 1e-9));
    CHECK_THAT(mb.d_lo_aa_d1, WithinRel(3067.2489163794217, 1e-9));

    // shrinking eps widens every bound
    SecurityParams tighter;
    tighter.eps_sec = 1e-14;
    auto mb2 = bound_monitor_expectations(counts, epsilon_budget(tighter));
    CHECK(mb2.up_aa_d1 > mb.up_aa_d1);
    CHECK(mb2.lo_aa_d1 < mb.lo_aa_d1);
    CHECK(mb2.up_00_d2 > mb.up_00_d2);
}

TEST_CASE("zero monitoring counts reduce the gain bounds to their floor terms") {
    channel::CountsRecord c = fixtures::km100().counts;
    c.n_00_d1 = c.n_00_d2 = c.n_aa_d1 = c.n_aa_d2 = 0;
    MonitorBounds mb; // all zeros: the dark-free asymptotic limit
    auto g = bound_n0x(c, mb, A18Form::verbatim_counts);
    CHECK(g.lower_n0x_d1 == 0.0);
    const auto np = n_plus_minus(c.mu);
    const double floor_term = (np.minus / 4.0) * std::exp(c.mu) * (np.minus / 4.0) *
                              static_cast<double>(c.N);
    CHECK_THAT(g.upper_n0x_d2, WithinRel(floor_term, 1e-12));
}

TEST_CASE("gain bounds scale linearly with counts and N in the asymptotic limit") {
    auto base = refine_counts(fixtures::km100().counts);
    auto doubled = base;
    doubled.N *= 2;
    for (auto* f : {&doubled.n_z, &doubled.n_00_d0, &doubled.n_00_d1, &doubled.n_00_d2,
                    &doubled.n_0a_d1, &doubled.n_0a_d2, &doubled.n_a0_d1, &doubled.n_a0_d2,
                    &doubled.n_aa_d1, &doubled.n_aa_d2})
        *f *= 2;
    auto budget = epsilon_budget(SecurityParams{});
    for (auto form : {A18Form::verbatim_counts, A18Form::yield_rescaled}) {
        auto g1 = bound_n0x(base, bound_monitor_expectations(base, budget, true), form);
        auto g2 = bound_n0x(doubled, bound_monitor_expectations(doubled, budget, true), form);
        CHECK_THAT(g2.lower_raw, WithinRel(2.0 * g1.lower_raw, 1e-9));
        CHECK_THAT(g2.upper_n0x_d2, WithinRel(2.0 * g1.upper_n0x_d2, 1e-9));
    }
}

TEST_CASE("phase error cancellation and symmetry limits") {
    auto counts = fixtures::km100().counts;
    auto budget = epsilon_budget(SecurityParams{});

    GainBounds cancel;
    cancel.upper_n0x_d2 = 0.0;
    cancel.lower_n0x_d1 = static_cast<double>(counts.n_0a_d1 + counts.n_a0_d1);
    auto pe = phase_error_upper(counts, cancel, budget, A20Scale::n_z, true);
    CHECK_THAT(pe.Ex_star, WithinAbs(0.0, 1e-12));

    channel::CountsRecord sym = counts;
    sym.n_0a_d2 = sym.n_0a_d1;
    sym.n_a0_d2 = sym.n_a0_d1;
    GainBounds nothing; // lower = upper = 0
    auto pe2 = phase_error_upper(sym, nothing, budget, A20Scale::n_z, true);
    CHECK_THAT(pe2.Ex_star, WithinAbs(0.5, 1e-12));

    // observation step adds Delta_p / n_z
    auto pe3 = phase_error_upper(sym, nothing, budget, A20Scale::n_z, false);
    const double expected_dp =
        std::sqrt(0.5 * static_cast<double>(sym.n_z) * std::log(7e10));
    CHECK_THAT(pe3.delta_p, WithinRel(expected_dp, 1e-12));
    CHECK_THAT(pe3.Ep_bar_raw, WithinAbs(0.5 + expected_dp / sym.n_z, 1e-9));
    CHECK(pe3.Ep_bar == 0.5); // clamped for entropy evaluation

    channel::CountsRecord empty = counts;
    empty.n_0a_d1 = empty.n_0a_d2 = empty.n_a0_d1 = empty.n_a0_d2 = 0;
    CHECK_THROWS_AS(phase_error_upper(empty, nothing, budget), std::invalid_argument);
}

TEST_CASE("key length equation") {
    SecurityParams sec;
    channel::CountsRecord c;
    c.N = 4'000'000;
    c.mu = 1e-3;
    c.n_z = 1'000'000;
    c.E_z = 0.0;

    auto r = key_length(c, 0.5, sec, LeakMode::analytic, 1.10);
    CHECK(r.l == 0); // h(1/2) = 1 wipes the key

    auto r2 = key_length(c, 0.0, sec, LeakMode::analytic, 1.10);
    CHECK(std::llabs(static_cast<long long>(r2.l) - 999878) <= 1);
    CHECK_THAT(r2.log_terms, WithinAbs(121.9113395108324, 1e-9));

    auto r3 = key_length(c, 0.0, sec, LeakMode::measured, 100'000.0);
    CHECK(r3.leak_ec == 100'000.0);
    CHECK(r3.l == r2.l - 100'000);
}

TEST_CASE("key length is monotone") {
    SecurityParams sec;
    channel::CountsRecord c;
    c.N = 4'000'000;
    c.mu = 1e-3;
    c.n_z = 1'000'000;
    c.E_z = 0.01;
    double prev = 1e18;
    for (double ep : {0.0, 0.05, 0.1, 0.2, 0.3, 0.5}) {
        const double l = key_length(c, ep, sec, LeakMode::analytic, 1.1).l_real;
        CHECK(l < prev);
        prev = l;
    }
    // leak grows with E_z
    c.E_z = 0.03;
    CHECK(key_length(c, 0.1, sec, LeakMode::analytic, 1.1).l <
          [&] { channel::CountsRecord c2 = c; c2.E_z = 0.01;
                return key_length(c2, 0.1, sec, LeakMode::analytic, 1.1).l; }());
    // smaller security epsilons only shrink the key
    SecurityParams tight;
    tight.eps_sec = 1e-14;
    tight.eps_cor = 1e-20;
    CHECK(key_length(c, 0.1, tight, LeakMode::analytic, 1.1).l <=
          key_length(c, 0.1, sec, LeakMode::analytic, 1.1).l);
}

TEST_CASE("key rate conversions") {
    CHECK_THAT(keyrate_bps(58'000, 1e12, 5e8), WithinAbs(29.0, 1e-9));
    CHECK(keyrate_bps(0, 1e12, 5e8) == 0.0);
    CHECK_THAT(keyrate_bps(5'060'000, 1e11, 5e8), WithinRel(2.53e4, 1e-9));
    CHECK_THAT(keyrate_bps(1'062'000, 1e12, 5e8), WithinRel(5.31e2, 1e-9));
    CHECK_THROWS_AS(keyrate_bps(1, 0, 5e8), std::invalid_argument);
}

TEST_CASE("implied reconciliation efficiency of the 100 km record") {
    const auto& c = fixtures::km100().counts;
    const double f =
        74145.0 / (static_cast<double>(c.n_z) * binary_entropy(c.E_z));
    CHECK(f > 1.03);
    CHECK(f < 1.10);
    const double analytic = 1.07 * static_cast<double>(c.n_z) * binary_entropy(c.E_z);
    CHECK(std::abs(analytic - 74145.0) / 74145.0 < 0.03);
}

TEST_CASE("pipeline audit trail stays finite and clamped on every record") {
    SecurityParams sec;
    for (const auto* fx : fixtures::all()) {
        for (bool refined : {false, true}) {
            for (auto form : {A18Form::verbatim_counts, A18Form::yield_rescaled}) {
                PipelineOptions opt;
                opt.refined = refined;
                opt.form = form;
                opt.leak_mode = LeakMode::analytic;
                auto rep = evaluate_pipeline(fx->counts, sec, opt);
                CHECK(std::isfinite(rep.phase.Ex_star_raw));
                CHECK(std::isfinite(rep.gains.lower_raw));
                CHECK(std::isfinite(rep.gains.upper_n0x_d2));
                CHECK(rep.gains.lower_n0x_d1 >= 0.0);
                CHECK(rep.phase.Ep_bar >= 0.0);
                CHECK(rep.phase.Ep_bar <= 0.5);
                CHECK(rep.l <= rep.n_z);
            }
        }
    }
}

// End-number reconciliation contract: the published end numbers are either
// reproduced by one of the shipped normalizations, or the divergence is
// reported machine-readably with the interpretation named. Silent
// recalibration is what this test forbids.
TEST_CASE("100 km end-number reconciliation contract") {
    SecurityParams sec;
    PipelineOptions opt;
    opt.refined = true;
    opt.leak_mode = LeakMode::measured;
    opt.leak_bits = static_cast<double>(fixtures::kLeakEcMeasured100km);

    bool checkpoint_met = false;
    fk::KeyLengthReport last;
    for (auto form : {A18Form::verbatim_counts, A18Form::yield_rescaled}) {
        opt.form = form;
        auto rep = evaluate_pipeline(fixtures::km100().counts, sec, opt);
        last = rep;
        if (std::abs(rep.phase.Ep_bar - 0.295) <= 0.02 &&
            std::llabs(static_cast<long long>(rep.l) - 58'000) <= 5'800)
            checkpoint_met = true;
    }
    if (!checkpoint_met) {
        auto rec = io::reconciliation_json(last, fixtures::km100(), true);
        INFO(rec.dump(2));
        CHECK(rec.at("status") == "discrepant");
        CHECK(rec.contains("interpretation"));
        CHECK(rec.contains("alternative"));
        WARN("published end numbers not reproduced by either normalization; "
             "divergence is reported machine-readably (see docs/analysis.md)");
    } else {
        SUCCEED("checkpoint reproduced");
    }
}

TEST_CASE("gain bounds are sound against the exact optics model") {
    // spot cells; the full grid runs in the acceptance suite
    auto budget = epsilon_budget(SecurityParams{});
    for (double mu : {1e-3, 1e-2}) {
        for (double t : {1.0, 0.1}) {
            auto run = harness::synthetic_from_oracle(mu, t, 0.99, 1e10);
            for (auto form : {A18Form::verbatim_counts, A18Form::yield_rescaled}) {
                for (bool asym : {false, true}) {
                    auto mb = bound_monitor_expectations(run.counts, budget, asym);
                    auto g = bound_n0x(run.counts, mb, form);
                    CHECK(g.lower_n0x_d1 <= run.true_n0x_d1 * (1 + 1e-9));
                    CHECK(g.upper_n0x_d2 >= run.true_n0x_d2 * (1 - 1e-9));
                }
            }
        }
    }
}

TEST_CASE("pipeline rejects bad inputs") {
    auto counts = fixtures::km100().counts;
    counts.P_00 = 0.0;
    MonitorBounds mb;
    CHECK_THROWS_AS(bound_n0x(counts, mb, A18Form::verbatim_counts), std::invalid_argument);
}
