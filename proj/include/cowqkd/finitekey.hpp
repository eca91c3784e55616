#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "cowqkd/channel.hpp"
#include "cowqkd/core.hpp"
#include "cowqkd/kato.hpp"

namespace cowqkd::fk {

using channel::CountsRecord;

// ---------------------------------------------------------------------------
// Refined vacuum counts
// ---------------------------------------------------------------------------

inline constexpr double kRefinedFraction = 0.352; // X-arm share of the Z rate per detector

// Replaces the X-arm vacuum counts by the scaled Z-arm vacuum count
// 0.352 * n_00^D0 (suppresses interferometer reflection artifacts); the raw
// values are preserved alongside.
inline CountsRecord refine_counts(const CountsRecord& in) {
    CountsRecord out = in;
    const std::uint64_t refined =
        static_cast<std::uint64_t>(std::llround(kRefinedFraction * static_cast<double>(in.n_00_d0)));
    out.n_00_d1_raw = in.n_00_d1;
    out.n_00_d2_raw = in.n_00_d2;
    out.n_00_d1 = refined;
    out.n_00_d2 = refined;
    out.n_00_d1_refined = refined;
    out.n_00_d2_refined = refined;
    return out;
}

// ---------------------------------------------------------------------------
// Monitoring-count expectation bounds (Kato, six uses)
// ---------------------------------------------------------------------------

struct MonitorBounds {
    // upper/lower estimates of the expected monitoring counts
    double up_aa_d1 = 0, up_aa_d2 = 0, up_00_d1 = 0, up_00_d2 = 0;
    double lo_aa_d1 = 0, lo_00_d1 = 0;
    // one-sided widths, for the audit trail
    double d_up_aa_d1 = 0, d_up_aa_d2 = 0, d_up_00_d1 = 0, d_up_00_d2 = 0;
    double d_lo_aa_d1 = 0, d_lo_00_d1 = 0;
};

// Applies kato_upper to every monitored count and kato_lower to the two D1
// quantities that enter the gain bound positively. k = number of rounds.
// With `asymptotic` set all widths are zero (diagnostic mode).
inline MonitorBounds bound_monitor_expectations(const CountsRecord& counts,
                                                const EpsilonBudget& budget,
                                                bool asymptotic = false) {
    counts.validate();
    const double k = static_cast<double>(counts.rounds());
    if (!(k >= 1.0)) throw std::invalid_argument("bound_monitor_expectations: no rounds");
    MonitorBounds b;
    if (asymptotic) {
        b.up_aa_d1 = b.lo_aa_d1 = static_cast<double>(counts.n_aa_d1);
        b.up_aa_d2 = static_cast<double>(counts.n_aa_d2);
        b.up_00_d1 = b.lo_00_d1 = static_cast<double>(counts.n_00_d1);
        b.up_00_d2 = static_cast<double>(counts.n_00_d2);
        return b;
    }
    auto up = [&](std::uint64_t n, EpsUse use, double& delta) {
        auto r = kato_upper({static_cast<double>(n), k, budget[use]});
        delta = r.delta;
        return r.value;
    };
    auto lo = [&](std::uint64_t n, EpsUse use, double& delta) {
        auto r = kato_lower({static_cast<double>(n), k, budget[use]});
        delta = r.delta;
        return r.value;
    };
    b.up_aa_d1 = up(counts.n_aa_d1, EpsUse::upper_aa_d1, b.d_up_aa_d1);
    b.up_aa_d2 = up(counts.n_aa_d2, EpsUse::upper_aa_d2, b.d_up_aa_d2);
    b.up_00_d1 = up(counts.n_00_d1, EpsUse::upper_00_d1, b.d_up_00_d1);
    b.up_00_d2 = up(counts.n_00_d2, EpsUse::upper_00_d2, b.d_up_00_d2);
    b.lo_aa_d1 = lo(counts.n_aa_d1, EpsUse::lower_aa_d1, b.d_lo_aa_d1);
    b.lo_00_d1 = lo(counts.n_00_d1, EpsUse::lower_00_d1, b.d_lo_00_d1);
    return b;
}

// ---------------------------------------------------------------------------
// Virtual-state gain bounds
// ---------------------------------------------------------------------------

// The two shipped readings of the gain-bound normalization. The verbatim
// form divides counts by the emission probabilities and keeps N as the total
// pulse count; the yield form divides by N * P_w and rescales the result by
// the virtual-state emission count N_rounds * p_z * N+/4.
enum class A18Form {
    verbatim_counts,
    yield_rescaled,
};

inline const char* to_string(A18Form f) {
    return f == A18Form::verbatim_counts ? "verbatim_counts" : "yield_rescaled";
}

struct GainBounds {
    double lower_n0x_d1 = 0;
    double upper_n0x_d2 = 0;
    double lower_raw = 0; // before the clamp at zero
};

inline GainBounds bound_n0x(const CountsRecord& counts, const MonitorBounds& mb,
                            A18Form form) {
    if (!(counts.P_00 > 0.0) || !(counts.P_aa > 0.0))
        throw std::invalid_argument("bound_n0x: P_00 and P_aa must be positive");
    const double mu = counts.mu;
    const auto np = n_plus_minus(mu);
    const double em = std::exp(mu), emi = std::exp(-mu);
    const double eh = std::exp(mu / 2.0), ehi = std::exp(-mu / 2.0);
    const double Np = np.plus, Nm = np.minus;

    GainBounds g;
    if (form == A18Form::verbatim_counts) {
        const double N = static_cast<double>(counts.N);
        const double y_lo_aa = mb.lo_aa_d1 / counts.P_aa;
        const double y_lo_00 = mb.lo_00_d1 / counts.P_00;
        const double y_up_aa1 = mb.up_aa_d1 / counts.P_aa;
        const double y_up_001 = mb.up_00_d1 / counts.P_00;
        const double y_up_aa2 = mb.up_aa_d2 / counts.P_aa;
        const double y_up_002 = mb.up_00_d2 / counts.P_00;

        g.lower_raw = (Nm / (4.0 * Np)) *
                          (em * y_lo_aa + emi * y_lo_00 - 2.0 * std::sqrt(y_up_001 * y_up_aa1)) -
                      (Nm * Nm / (4.0 * Np)) *
                          (em * std::sqrt(N * y_up_aa1) + std::sqrt(N * y_up_001));
        g.upper_n0x_d2 =
            0.25 * std::pow(eh * std::sqrt(y_up_aa2) + ehi * std::sqrt(y_up_002), 2) +
            (Nm / 4.0) * (em * (Nm / 4.0) * N + em * std::sqrt(N * y_up_aa2) +
                          std::sqrt(N * y_up_002));
    } else {
        const double N = static_cast<double>(counts.N);
        const double rounds = static_cast<double>(counts.rounds());
        const double p_z = 1.0 - counts.P_00 - counts.P_aa;
        const double scale = rounds * p_z * (Np / 4.0);
        // per-pulse yields; the correction terms lose their N factors at this scale
        const double x_lo_aa = mb.lo_aa_d1 / (N * counts.P_aa);
        const double x_lo_00 = mb.lo_00_d1 / (N * counts.P_00);
        const double x_up_aa1 = mb.up_aa_d1 / (N * counts.P_aa);
        const double x_up_001 = mb.up_00_d1 / (N * counts.P_00);
        const double x_up_aa2 = mb.up_aa_d2 / (N * counts.P_aa);
        const double x_up_002 = mb.up_00_d2 / (N * counts.P_00);

        const double y_lower =
            (Nm / (4.0 * Np)) *
                (em * x_lo_aa + emi * x_lo_00 - 2.0 * std::sqrt(x_up_001 * x_up_aa1)) -
            (Nm * Nm / (4.0 * Np)) * (em * std::sqrt(x_up_aa1) + std::sqrt(x_up_001));
        const double y_upper =
            0.25 * std::pow(eh * std::sqrt(x_up_aa2) + ehi * std::sqrt(x_up_002), 2) +
            (Nm / 4.0) * (em * (Nm / 4.0) + em * std::sqrt(x_up_aa2) + std::sqrt(x_up_002));
        g.lower_raw = scale * y_lower;
        g.upper_n0x_d2 = scale * y_upper;
    }
    g.lower_n0x_d1 = std::max(0.0, g.lower_raw);
    return g;
}

// ---------------------------------------------------------------------------
// Phase error rate
// ---------------------------------------------------------------------------

// Scale of the expectation -> observation conversion for phase errors. The
// per-detection reading (n_z) is the default; the literal total-pulse reading
// is available as a switch and flagged in the report.
enum class A20Scale {
    n_z,
    total_pulses,
};

inline const char* to_string(A20Scale s) {
    return s == A20Scale::n_z ? "n_z" : "total_pulses";
}

struct PhaseErrorBounds {
    double lower_n0x_d1 = 0;
    double upper_n0x_d2 = 0;
    double Ex_star = 0;      // expected X error upper bound
    double Ex_star_raw = 0;  // before clamping to [0,1]
    double delta_p = 0;      // observation-step width
    double n_p_bar = 0;      // upper bound on observed phase errors
    double Ep_bar = 0;       // n_p_bar / n_z, clamped to [0, 0.5]
    double Ep_bar_raw = 0;
};

inline PhaseErrorBounds phase_error_upper(const CountsRecord& counts, const GainBounds& g,
                                          const EpsilonBudget& budget,
                                          A20Scale scale = A20Scale::n_z,
                                          bool asymptotic = false) {
    const double n0z_d1 = static_cast<double>(counts.n_0a_d1);
    const double n0z_d2 = static_cast<double>(counts.n_0a_d2);
    const double n1z_d1 = static_cast<double>(counts.n_a0_d1);
    const double n1z_d2 = static_cast<double>(counts.n_a0_d2);
    const double denom = n0z_d1 + n0z_d2 + n1z_d1 + n1z_d2;
    if (!(denom > 0.0))
        throw std::invalid_argument("phase_error_upper: zero X-arm Z-state counts");

    PhaseErrorBounds pe;
    pe.lower_n0x_d1 = g.lower_n0x_d1;
    pe.upper_n0x_d2 = g.upper_n0x_d2;
    pe.Ex_star_raw = (g.upper_n0x_d2 - g.lower_n0x_d1 + n0z_d1 + n1z_d1) / denom;
    pe.Ex_star = std::clamp(pe.Ex_star_raw, 0.0, 1.0);

    const double n_z = static_cast<double>(counts.n_z);
    if (!(n_z > 0.0)) throw std::invalid_argument("phase_error_upper: n_z is zero");
    const double scale_count =
        scale == A20Scale::n_z ? n_z : static_cast<double>(counts.N);
    const double n_p_star = scale_count * pe.Ex_star;
    pe.delta_p =
        asymptotic ? 0.0
                   : std::sqrt(0.5 * n_z * std::log(1.0 / budget[EpsUse::phase_obs]));
    pe.n_p_bar = n_p_star + pe.delta_p;
    pe.Ep_bar_raw = pe.n_p_bar / n_z;
    pe.Ep_bar = std::clamp(pe.Ep_bar_raw, 0.0, 0.5);
    return pe;
}

// ---------------------------------------------------------------------------
// Key length
// ---------------------------------------------------------------------------

enum class LeakMode {
    analytic, // f * n_z * h(E_z)
    measured, // explicit bit count
};

struct KeyLengthReport {
    // inputs
    std::uint64_t n_z = 0;
    double E_z = 0;
    double mu = 0;
    std::uint64_t N = 0;
    // intermediates
    MonitorBounds monitor;
    GainBounds gains;
    PhaseErrorBounds phase;
    double leak_ec = 0;
    double log_terms = 0; // log2(2/eps_cor) + 2 log2(5/eps_sec)
    // result
    double l_real = 0; // before clamping/flooring
    std::uint64_t l = 0;
    double rate_bps = 0;
    // mode flags
    bool refined = false;
    bool asymptotic = false;
    A18Form form = A18Form::verbatim_counts;
    A20Scale a20_scale = A20Scale::n_z;
    LeakMode leak_mode = LeakMode::analytic;
    double f_ec = 1.10;
    // the other normalization's results, for cross-reporting
    double alt_l = 0;
    double alt_Ep_bar = 0;
};

inline double eq1_key_length(double n_z, double Ep_bar, double leak_ec,
                             const SecurityParams& sec) {
    const double log_terms =
        std::log2(2.0 / sec.eps_cor) + 2.0 * std::log2(5.0 / sec.eps_sec);
    return n_z * (1.0 - binary_entropy(Ep_bar)) - leak_ec - log_terms;
}

// Final key length l = n_z [1 - h(Ep)] - Leak_EC - log2(2/eps_cor)
// - 2 log2(5/eps_sec), clamped into [0, n_z].
inline KeyLengthReport key_length(const CountsRecord& counts, double Ep_bar,
                                  const SecurityParams& sec, LeakMode leak_mode,
                                  double leak_bits_or_f) {
    sec.validate();
    KeyLengthReport r;
    r.n_z = counts.n_z;
    r.E_z = counts.E_z;
    r.mu = counts.mu;
    r.N = counts.N;
    r.leak_mode = leak_mode;
    if (leak_mode == LeakMode::analytic) {
        r.f_ec = leak_bits_or_f;
        r.leak_ec = leak_bits_or_f * static_cast<double>(counts.n_z) *
                    binary_entropy(counts.E_z);
    } else {
        r.leak_ec = leak_bits_or_f;
    }
    r.log_terms = std::log2(2.0 / sec.eps_cor) + 2.0 * std::log2(5.0 / sec.eps_sec);
    r.l_real = static_cast<double>(counts.n_z) * (1.0 - binary_entropy(Ep_bar)) -
               r.leak_ec - r.log_terms;
    const double clamped = std::clamp(r.l_real, 0.0, static_cast<double>(counts.n_z));
    r.l = static_cast<std::uint64_t>(std::floor(clamped));
    return r;
}

inline double keyrate_bps(std::uint64_t l, double n_pulses, double repetition_hz) {
    if (!(n_pulses > 0.0) || !(repetition_hz > 0.0))
        throw std::invalid_argument("keyrate_bps: N and repetition must be positive");
    return static_cast<double>(l) * repetition_hz / n_pulses;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct PipelineOptions {
    bool refined = false;
    A18Form form = A18Form::verbatim_counts;
    A20Scale a20_scale = A20Scale::n_z;
    LeakMode leak_mode = LeakMode::analytic;
    double leak_bits = 0;  // used when leak_mode == measured
    double f_ec = 1.10;    // used when leak_mode == analytic
    bool asymptotic = false;
    double repetition_hz = 5.0e8;
};

inline KeyLengthReport evaluate_pipeline(const CountsRecord& counts_in,
                                         const SecurityParams& sec,
                                         const PipelineOptions& opt) {
    CountsRecord counts = opt.refined ? refine_counts(counts_in) : counts_in;
    const auto budget = epsilon_budget(sec);
    const auto mb = bound_monitor_expectations(counts, budget, opt.asymptotic);
    const auto gains = bound_n0x(counts, mb, opt.form);
    const auto pe = phase_error_upper(counts, gains, budget, opt.a20_scale, opt.asymptotic);
    KeyLengthReport r =
        key_length(counts, pe.Ep_bar, sec,
                   opt.leak_mode, opt.leak_mode == LeakMode::measured ? opt.leak_bits : opt.f_ec);
    r.monitor = mb;
    r.gains = gains;
    r.phase = pe;
    r.refined = opt.refined;
    r.asymptotic = opt.asymptotic;
    r.form = opt.form;
    r.a20_scale = opt.a20_scale;
    r.rate_bps = keyrate_bps(r.l, static_cast<double>(counts.N), opt.repetition_hz);

    // evaluate the other normalization for the audit trail
    const A18Form alt = opt.form == A18Form::verbatim_counts ? A18Form::yield_rescaled
                                                             : A18Form::verbatim_counts;
    const auto alt_gains = bound_n0x(counts, mb, alt);
    const auto alt_pe =
        phase_error_upper(counts, alt_gains, budget, opt.a20_scale, opt.asymptotic);
    const auto alt_r =
        key_length(counts, alt_pe.Ep_bar, sec,
                   opt.leak_mode, opt.leak_mode == LeakMode::measured ? opt.leak_bits : opt.f_ec);
    r.alt_l = static_cast<double>(alt_r.l);
    r.alt_Ep_bar = alt_pe.Ep_bar;
    return r;
}

} // namespace cowqkd::fk
