#include <catch2/catch_amalgamated.hpp>

#include "cowqkd/kato.hpp"
#include "cowqkd/rng.hpp"

using namespace cowqkd;
using namespace cowqkd::fk;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

// Golden values frozen from a 60-digit evaluation of the closed forms,
// computed independently of this implementation.
TEST_CASE("golden widths at the symmetric point") {
    const KatoInput in{5000, 1e4, 1e-10};
    auto up = kato_upper(in);
    auto lo = kato_lower(in);
    CHECK_THAT(up.a, WithinAbs(-0.1531921280570003, 1e-12));
    CHECK_THAT(up.b, WithinAbs(3.3896031632441906, 1e-12));
    CHECK_THAT(up.delta, WithinAbs(338.96031632441906, 1e-8));
    CHECK_THAT(lo.delta, WithinAbs(338.96031632441906, 1e-8));
    CHECK(up.value == Catch::Approx(5000 + up.delta));
    CHECK(lo.value == Catch::Approx(5000 - lo.delta));
    // Gamma = k/2 is the symmetric point: both widths coincide
    CHECK_THAT(up.delta, WithinAbs(lo.delta, 1e-9));
}

TEST_CASE("golden widths at experiment scale") {
    // k = 5e11 rounds, eps = 1e-10/7: the regime where the parameter
    // expressions cancel nine leading digits
    const double eps = 1e-10 / 7;
    auto up = kato_upper({190418, 5e11, eps});
    auto lo = kato_lower({190418, 5e11, eps});
    CHECK_THAT(up.delta, WithinRel(3100.5445724562163, 1e-10));
    CHECK_THAT(lo.delta, WithinRel(3067.2489163794217, 1e-10));
    auto up2 = kato_upper({493, 5e11, eps});
    auto lo2 = kato_lower({493, 5e11, eps});
    CHECK_THAT(up2.delta, WithinRel(174.44298319026934, 1e-10));
    CHECK_THAT(lo2.delta, WithinRel(141.14730181874554, 1e-10));
}

TEST_CASE("failure probability round-trips through the parameter formulas") {
    for (double gamma : {100.0, 5000.0, 9000.0}) {
        for (double eps : {1e-3, 1e-10}) {
            const double k = 1e4;
            auto up = kato_upper({gamma, k, eps});
            const double eps_up = std::exp(-2 * (up.b * up.b - up.a * up.a) /
                                           std::pow(1 + 4 * up.a / (3 * std::sqrt(k)), 2));
            CHECK_THAT(eps_up, WithinRel(eps, 1e-6));
            auto lo = kato_lower({gamma, k, eps});
            const double eps_lo = std::exp(-2 * (lo.b * lo.b - lo.a * lo.a) /
                                           std::pow(1 - 4 * lo.a / (3 * std::sqrt(k)), 2));
            CHECK_THAT(eps_lo, WithinRel(eps, 1e-6));
        }
    }
}

TEST_CASE("degenerate observed sums") {
    auto lo = kato_lower({0, 1e4, 1e-10});
    CHECK(lo.value == 0.0); // clamped at zero
    CHECK_THAT(lo.delta, WithinAbs(0.0, 1e-9));
    auto up = kato_upper({0, 1e4, 1e-10});
    CHECK(up.delta > 0.0);
    auto up_full = kato_upper({1e4, 1e4, 1e-10});
    CHECK_THAT(up_full.delta, WithinAbs(0.0, 1e-9));
    auto lo_full = kato_lower({1e4, 1e4, 1e-10});
    CHECK(lo_full.delta > 0.0);
}

TEST_CASE("widths are positive and widen as eps shrinks") {
    Xoshiro256 rng(5);
    for (int i = 0; i < 50; ++i) {
        const double k = 100.0 + rng.below(1'000'000);
        const double gamma = rng.uniform() * k;
        const double eps = std::pow(10.0, -2.0 - rng.uniform() * 10.0);
        auto up = kato_upper({gamma, k, eps});
        CHECK(up.delta > 0.0);
        auto up_tighter = kato_upper({gamma, k, eps * 10});
        CHECK(up.delta > up_tighter.delta);
        auto lo = kato_lower({gamma, k, eps});
        auto lo_tighter = kato_lower({gamma, k, eps * 10});
        CHECK(lo.delta >= lo_tighter.delta);
    }
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(kato_upper({-1, 100, 1e-3}), std::invalid_argument);
    CHECK_THROWS_AS(kato_upper({101, 100, 1e-3}), std::invalid_argument);
    CHECK_THROWS_AS(kato_upper({50, 100, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(kato_upper({50, 100, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(kato_upper({50, 0, 1e-3}), std::invalid_argument);
}

TEST_CASE("binomial coverage smoke test") {
    // the full grid runs in the acceptance suite; one cell here
    const double k = 1e4, p = 0.3, eps = 1e-3;
    const int trials = 5000;
    Xoshiro256 rng(31337);
    int viol_up = 0, viol_lo = 0;
    for (int t = 0; t < trials; ++t) {
        const double gamma = static_cast<double>(
            BinomialSampler::sample(rng, static_cast<std::uint64_t>(k), p));
        if (k * p > kato_upper({gamma, k, eps}).value) ++viol_up;
        if (k * p < kato_lower({gamma, k, eps}).value) ++viol_lo;
    }
    CHECK(viol_up <= 2 * eps * trials + 3);
    CHECK(viol_lo <= 2 * eps * trials + 3);
}
