#include <catch2/catch_amalgamated.hpp>

#include "cowqkd/core.hpp"
#include "cowqkd/rng.hpp"

using namespace cowqkd;

TEST_CASE("binary entropy closed form") {
    CHECK(binary_entropy(0.5) == 1.0);
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    CHECK_THAT(binary_entropy(0.25), Catch::Matchers::WithinAbs(0.811278124459133, 1e-6));
    CHECK_THROWS_AS(binary_entropy(-0.1), std::domain_error);
    CHECK_THROWS_AS(binary_entropy(1.1), std::domain_error);
}

TEST_CASE("binary entropy symmetry and concavity") {
    Xoshiro256 rng(101);
    for (int i = 0; i < 10000; ++i) {
        const double a = rng.uniform();
        const double b = rng.uniform();
        CHECK(binary_entropy(a) == Catch::Approx(binary_entropy(1.0 - a)).margin(1e-12));
        const double mid = binary_entropy(0.5 * (a + b));
        const double avg = 0.5 * (binary_entropy(a) + binary_entropy(b));
        CHECK(mid >= avg - 1e-12);
    }
}

TEST_CASE("normalization factors") {
    auto z = n_plus_minus(0.0);
    CHECK(z.plus == 4.0);
    CHECK(z.minus == 0.0);

    auto half = n_plus_minus(std::log(2.0));
    CHECK_THAT(half.plus, Catch::Matchers::WithinAbs(3.0, 1e-14));
    CHECK_THAT(half.minus, Catch::Matchers::WithinAbs(1.0, 1e-14));

    // Taylor cross-check 2 mu (1 - mu/2 + mu^2/6) at the smallest bundled intensity
    const double mu = 2.43e-4;
    const double taylor = 2.0 * mu * (1.0 - mu / 2.0 + mu * mu / 6.0);
    auto np = n_plus_minus(mu);
    CHECK_THAT(np.minus, Catch::Matchers::WithinAbs(4.85941e-4, 1e-9));
    CHECK_THAT(np.minus, Catch::Matchers::WithinAbs(taylor, 1e-15));

    CHECK_THROWS_AS(n_plus_minus(-1.0), std::domain_error);
}

TEST_CASE("normalization factors stay ordered and sum to four") {
    Xoshiro256 rng(7);
    double prev_minus = 0.0;
    for (double mu = 1e-6; mu < 10.0; mu *= 1.7) {
        auto np = n_plus_minus(mu);
        CHECK(np.minus > 0.0);
        CHECK(np.minus < 2.0);
        CHECK(np.plus > 2.0);
        CHECK(np.plus < 4.0);
        CHECK(np.plus + np.minus == Catch::Approx(4.0).margin(1e-12));
        CHECK(np.minus > prev_minus);
        prev_minus = np.minus;
        (void)rng;
    }
}

TEST_CASE("round encoding") {
    const double mu = 0.2;
    auto z1 = encode_round(Basis::Z, 1, mu);
    CHECK(z1.early == mu);
    CHECK(z1.late == 0.0);
    auto z0 = encode_round(Basis::Z, 0, mu);
    CHECK(z0.early == 0.0);
    CHECK(z0.late == mu);
    auto xv = encode_round(Basis::X, 0, mu);
    CHECK(xv.early == 0.0);
    CHECK(xv.late == 0.0);
    auto xb = encode_round(Basis::X, 1, mu);
    CHECK(xb.early == mu);
    CHECK(xb.late == mu);
    CHECK_THROWS_AS(encode_round(Basis::Z, 2, mu), std::invalid_argument);
    CHECK_THROWS_AS(encode_round(Basis::Z, 0, 0.0), std::invalid_argument);
}

TEST_CASE("round encoding is a bijection onto the four intensity patterns") {
    const double mu = 0.37;
    std::set<std::pair<double, double>> patterns;
    for (auto basis : {Basis::Z, Basis::X})
        for (int choice : {0, 1}) {
            auto r = encode_round(basis, choice, mu);
            patterns.insert({r.early, r.late});
        }
    CHECK(patterns == std::set<std::pair<double, double>>{
                          {0.0, 0.0}, {0.0, mu}, {mu, 0.0}, {mu, mu}});
}

TEST_CASE("epsilon budget") {
    SecurityParams sec;
    auto b = epsilon_budget(sec);
    for (int i = 0; i < kEpsUseCount; ++i)
        CHECK(b.eps[i] == Catch::Approx(1e-10 / 7).margin(1e-25));

    SecurityParams with_override = sec;
    with_override.eps_overrides[static_cast<int>(EpsUse::phase_obs)] = 3e-11;
    auto b2 = epsilon_budget(with_override);
    CHECK(b2[EpsUse::phase_obs] == 3e-11);
    CHECK(b2[EpsUse::upper_aa_d1] == Catch::Approx(1e-10 / 7).margin(1e-25));

    SecurityParams bad = sec;
    bad.eps_sec = 0.0;
    CHECK_THROWS_AS(epsilon_budget(bad), std::invalid_argument);
}

TEST_CASE("protocol parameter validation") {
    ProtocolParams p; // defaults reproduce the 10/10/40/40 split
    REQUIRE_NOTHROW(p.validate());
    CHECK(p.p_z == 0.80);
    CHECK(p.p_0 == 0.10);
    CHECK(p.p_alpha_alpha == 0.10);
    CHECK(p.p_x() == Catch::Approx(0.20));

    ProtocolParams q = p;
    q.p_z = 0.8 + 3e-13; // within tolerance: renormalized
    REQUIRE_NOTHROW(q.validate());
    CHECK(q.p_z + q.p_0 + q.p_alpha_alpha == Catch::Approx(1.0).margin(1e-15));

    ProtocolParams r = p;
    r.p_z = 0.9;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);

    ProtocolParams s = p;
    s.mu = 0.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
