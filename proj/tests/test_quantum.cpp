#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "cowqkd/quantum.hpp"
#include "fock_oracle.hpp"

using namespace cowqkd;
using namespace cowqkd::quantum;
using Catch::Matchers::WithinAbs;

namespace {

// X-arm marginals of the joint pattern distribution (any D0 outcome).
struct XMarginals {
    double d1_only = 0, d2_only = 0, both = 0, none = 0;
};

XMarginals x_marginals(const ClickProbabilities& cp) {
    XMarginals m;
    for (unsigned t = 0; t < 16; ++t) {
        const bool d1 = t & 4, d2 = t & 8;
        if (d1 && !d2) m.d1_only += cp.pattern[t];
        else if (!d1 && d2) m.d2_only += cp.pattern[t];
        else if (d1 && d2) m.both += cp.pattern[t];
        else m.none += cp.pattern[t];
    }
    return m;
}

OpticalPath ideal_path() {
    OpticalPath p;
    p.transmittance = 1.0;
    p.detector_eff = {1.0, 1.0, 1.0};
    p.dark_prob = {0.0, 0.0, 0.0};
    p.visibility = 1.0;
    p.z_split = 0.30;
    return p;
}

} // namespace

TEST_CASE("coherent overlaps") {
    CHECK(coherent_overlap(0.0, 0.0) == std::complex<double>(1.0, 0.0));
    const double mu = 0.7;
    CHECK_THAT(std::abs(coherent_overlap(std::sqrt(mu), 0.0)),
               WithinAbs(std::exp(-mu / 2.0), 1e-14));
    // |<alpha|-alpha>| = e^(-2mu), cross-checked by a 40-photon Fock sum
    const double a = 1.0; // mu = 1
    CHECK_THAT(std::abs(coherent_overlap(a, -a)), WithinAbs(std::exp(-2.0), 1e-12));
    std::complex<double> series = 0.0;
    for (int n = 0; n < 40; ++n)
        series += std::exp(-1.0) * std::pow(a, n) * std::pow(-a, n) /
                  std::exp(fock::log_factorial(n));
    CHECK_THAT(std::abs(coherent_overlap(a, -a)), WithinAbs(std::abs(series), 1e-12));
}

TEST_CASE("no-click kernel") {
    CHECK(no_click_kernel(0.0, 0.0, 0.77) == std::complex<double>(1.0, 0.0));
    const double mu = 0.4, eta = 0.35;
    const auto diag = no_click_kernel(std::sqrt(mu), std::sqrt(mu), eta);
    CHECK_THAT(diag.real(), WithinAbs(std::exp(-eta * mu), 1e-14));
    CHECK_THAT(diag.imag(), WithinAbs(0.0, 1e-16));
    // a = alpha, b = -alpha, eta = 1/2, mu = 1 -> e^(-1.5)
    const auto cross = no_click_kernel(1.0, -1.0, 0.5);
    CHECK_THAT(cross.real(), WithinAbs(std::exp(-1.5), 1e-12));
    // Fock series for <a|(1-eta)^n|b>
    std::complex<double> series = 0.0;
    for (int n = 0; n < 40; ++n)
        series += std::exp(-1.0) * std::pow(1.0 * -1.0 * 0.5, n) /
                  std::exp(fock::log_factorial(n));
    CHECK_THAT(cross.real(), WithinAbs(series.real(), 1e-12));
    CHECK_THROWS_AS(no_click_kernel(1.0, 1.0, 1.5), std::domain_error);
}

TEST_CASE("state constructors are normalized") {
    for (double mu : {1e-4, 1e-3, 1e-2, 0.1, 1.0}) {
        CHECK_THAT(CoherentSuperposition::z0(mu).norm_sq(), WithinAbs(1.0, 1e-10));
        CHECK_THAT(CoherentSuperposition::x0(mu).norm_sq(), WithinAbs(1.0, 1e-10));
        CHECK_THAT(CoherentSuperposition::x1(mu).norm_sq(), WithinAbs(1.0, 1e-10));
        CHECK_THAT(CoherentSuperposition::bright_pair(mu).norm_sq(), WithinAbs(1.0, 1e-10));
    }
    CHECK_THROWS_AS(CoherentSuperposition({{2.0, 0.0, 0.0}}), std::invalid_argument);
}

TEST_CASE("vacuum never clicks without dark counts") {
    auto cp = click_probabilities(CoherentSuperposition::vacuum_pair(), ideal_path());
    CHECK(cp.none == Catch::Approx(1.0).margin(1e-12));
    CHECK(cp.p_d1 == 0.0);
    CHECK(cp.p_d2 == 0.0);
    CHECK(cp.p_d0_early == 0.0);
}

TEST_CASE("bright pair exits the constructive port") {
    auto path = ideal_path();
    auto cp = click_probabilities(CoherentSuperposition::bright_pair(1e-3), path);
    CHECK(cp.p_d2 == Catch::Approx(0.0).margin(1e-15));
    CHECK(cp.p_d1 > 0.0);
}

TEST_CASE("antisymmetric state exits the destructive port") {
    const double mu = 1e-3;
    auto cp = click_probabilities(CoherentSuperposition::x1(mu), ideal_path());
    REQUIRE(cp.p_d2 > 0.0);
    // D1 leakage suppressed by N-/N+ ~ mu/2
    CHECK(cp.p_d1 / cp.p_d2 < 1e-3);

    // Fock-oracle agreement for both virtual states
    const auto f1 = fock::x_arm_probabilities(CoherentSuperposition::x1(mu).branches(),
                                              0.70, 0.0, 1.0, 1.0, 6);
    auto path = ideal_path();
    auto m1 = x_marginals(click_probabilities(CoherentSuperposition::x1(mu), path));
    CHECK_THAT(m1.d1_only, WithinAbs(f1.d1_only, 1e-9));
    CHECK_THAT(m1.d2_only, WithinAbs(f1.d2_only, 1e-9));
    CHECK_THAT(m1.both, WithinAbs(f1.both, 1e-9));

    const auto f0 = fock::x_arm_probabilities(CoherentSuperposition::x0(mu).branches(),
                                              0.70, 0.0, 1.0, 1.0, 6);
    auto m0 = x_marginals(click_probabilities(CoherentSuperposition::x0(mu), path));
    CHECK_THAT(m0.d1_only, WithinAbs(f0.d1_only, 1e-9));
    CHECK_THAT(m0.d2_only, WithinAbs(f0.d2_only, 1e-9));
}

TEST_CASE("fock oracle agreement under loss and imbalanced detectors") {
    const double mu = 0.05;
    OpticalPath path;
    path.transmittance = 0.37;
    path.z_split = 0.25;
    path.detector_eff = {0.9, 0.61, 0.43};
    path.dark_prob = {0, 0, 0};
    auto st = CoherentSuperposition::x0(mu);
    auto mine = x_marginals(click_probabilities(st, path));
    const double t_eff = path.transmittance * (1.0 - path.z_split);
    auto ref = fock::x_arm_probabilities(st.branches(), t_eff, 0.0, 0.61, 0.43, 10);
    CHECK_THAT(mine.d1_only, WithinAbs(ref.d1_only, 1e-9));
    CHECK_THAT(mine.d2_only, WithinAbs(ref.d2_only, 1e-9));
    CHECK_THAT(mine.both, WithinAbs(ref.both, 1e-9));
    CHECK_THAT(mine.none, WithinAbs(ref.none, 1e-9));
}

TEST_CASE("click probabilities are a distribution") {
    OpticalPath path;
    path.transmittance = 0.2;
    path.detector_eff = {0.762, 0.46, 0.46};
    path.dark_prob = {5.6e-9, 8e-10, 8.8e-9};
    path.visibility = 0.99;
    for (auto mk : {&CoherentSuperposition::z0, &CoherentSuperposition::z1,
                    &CoherentSuperposition::x0, &CoherentSuperposition::x1,
                    &CoherentSuperposition::bright_pair}) {
        auto cp = click_probabilities(mk(0.01), path);
        double sum = 0.0;
        for (double p : cp.pattern) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            sum += p;
        }
        CHECK_THAT(sum, WithinAbs(1.0, 1e-10));
        auto m = x_marginals(cp);
        CHECK_THAT(m.d1_only + m.d2_only + m.both + m.none, WithinAbs(1.0, 1e-10));
        CHECK_THAT(cp.x_none, WithinAbs(m.none, 1e-12));
    }
}

TEST_CASE("kernel diagonal is the Poissonian no-click probability") {
    for (double mu : {1e-4, 0.01, 0.3}) {
        for (double eta : {0.1, 0.46, 1.0}) {
            auto k = no_click_kernel(std::sqrt(mu), std::sqrt(mu), eta);
            CHECK_THAT(k.real(), WithinAbs(std::exp(-eta * mu), 1e-14));
        }
    }
}

TEST_CASE("click probabilities monotone in transmittance, efficiency, dark rate") {
    auto st = CoherentSuperposition::bright_pair(0.01);
    auto base = ideal_path();
    base.transmittance = 0.2;
    base.detector_eff = {0.5, 0.5, 0.5};
    base.dark_prob = {1e-6, 1e-6, 1e-6};
    auto p0 = click_probabilities(st, base);

    auto more_t = base;
    more_t.transmittance = 0.4;
    CHECK(click_probabilities(st, more_t).p_d1 > p0.p_d1);

    auto more_eta = base;
    more_eta.detector_eff = {0.5, 0.8, 0.5};
    CHECK(click_probabilities(st, more_eta).p_d1 > p0.p_d1);

    auto more_dark = base;
    more_dark.dark_prob = {1e-6, 1e-4, 1e-6};
    CHECK(click_probabilities(st, more_dark).p_d1 > p0.p_d1);
}

TEST_CASE("density identity: Z and X ensembles coincide") {
    CHECK(density_mixture_gap(0.5) < 1e-12);
    CHECK(density_mixture_gap(2.43e-4) < 1e-12); // the longest-run intensity
    CHECK(density_mixture_gap(3.0) < 1e-12);
}

TEST_CASE("virtual ensemble click identity") {
    ProtocolParams pr;
    for (double mu : {1e-4, 1e-3, 1e-2, 0.1}) {
        for (double t : {1.0, 0.1, 0.01}) {
            for (double v : {1.0, 0.99}) {
                pr.mu = mu;
                OpticalPath path;
                path.transmittance = t;
                path.visibility = v;
                path.detector_eff = {0.762, 0.46, 0.46};
                path.dark_prob = {5.6e-9, 8e-10, 8.8e-9};
                auto vc = expected_counts_virtual(pr, path, 1e9);
                const double lhs1 = vc.n_0x_d1 + vc.n_1x_d1;
                const double rhs1 = vc.n_0z_d1 + vc.n_1z_d1;
                const double lhs2 = vc.n_0x_d2 + vc.n_1x_d2;
                const double rhs2 = vc.n_0z_d2 + vc.n_1z_d2;
                REQUIRE(rhs1 > 0.0);
                CHECK(std::abs(lhs1 - rhs1) / rhs1 < 1e-9);
                CHECK(std::abs(lhs2 - rhs2) / rhs2 < 1e-9);
            }
        }
    }
}

TEST_CASE("virtual counts: no light means no clicks") {
    ProtocolParams pr;
    pr.mu = 1e-3;
    OpticalPath path;
    path.transmittance = 0.0;
    path.dark_prob = {0, 0, 0};
    auto vc = expected_counts_virtual(pr, path, 1e6);
    CHECK(vc.n_0x_d1 == 0.0);
    CHECK(vc.n_0x_d2 == 0.0);
    CHECK(vc.n_1x_d1 == 0.0);
    CHECK(vc.n_1x_d2 == 0.0);
}

TEST_CASE("symmetric virtual state prefers the bright port") {
    ProtocolParams pr;
    pr.mu = 1e-3;
    auto vc = expected_counts_virtual(pr, ideal_path(), 1e6);
    CHECK(vc.n_0x_d2 < 1e-2 * vc.n_0x_d1);
}
