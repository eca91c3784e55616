#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "cowqkd/core.hpp"

namespace cowqkd::quantum {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

// One branch c * |early>|late> of a two-mode coherent superposition.
struct CoherentBranch {
    cplx coeff;
    cplx early;
    cplx late;
};

// Inner product of two single-mode coherent states <a|b>.
inline cplx coherent_overlap(cplx a, cplx b) {
    return std::exp(-0.5 * std::norm(a) - 0.5 * std::norm(b) + std::conj(a) * b);
}

// Two-mode overlap <a_e a_l | b_e b_l>.
inline cplx overlap(cplx a_early, cplx a_late, cplx b_early, cplx b_late) {
    return coherent_overlap(a_early, b_early) * coherent_overlap(a_late, b_late);
}

// Matrix element <a| (1-eta)^n |b> of the threshold-detector no-click POVM
// between coherent states of one mode.
inline cplx no_click_kernel(cplx a, cplx b, double eta) {
    if (eta < 0.0 || eta > 1.0) throw std::domain_error("no_click_kernel: eta outside [0,1]");
    return std::exp(-0.5 * std::norm(a) - 0.5 * std::norm(b) +
                    (1.0 - eta) * std::conj(a) * b);
}

class CoherentSuperposition {
public:
    explicit CoherentSuperposition(std::vector<CoherentBranch> branches,
                                   bool check_norm = true)
        : branches_(std::move(branches)) {
        if (check_norm && std::abs(norm_sq() - 1.0) > 1e-10)
            throw std::invalid_argument("CoherentSuperposition: state not normalized");
    }

    double norm_sq() const {
        cplx s = 0.0;
        for (const auto& bi : branches_)
            for (const auto& bj : branches_)
                s += std::conj(bi.coeff) * bj.coeff *
                     overlap(bi.early, bi.late, bj.early, bj.late);
        return s.real();
    }

    const std::vector<CoherentBranch>& branches() const { return branches_; }

    // |0_z> = |0>|alpha>   (logic bit 0: late pulse bright)
    static CoherentSuperposition z0(double mu) {
        return CoherentSuperposition({{1.0, 0.0, amp(mu)}});
    }
    // |1_z> = |alpha>|0>
    static CoherentSuperposition z1(double mu) {
        return CoherentSuperposition({{1.0, amp(mu), 0.0}});
    }
    // |0_x> = (|0_z> + |1_z>)/sqrt(N+)
    static CoherentSuperposition x0(double mu) {
        const double c = 1.0 / std::sqrt(n_plus_minus(mu).plus);
        return CoherentSuperposition({{c, 0.0, amp(mu)}, {c, amp(mu), 0.0}});
    }
    // |1_x> = (|0_z> - |1_z>)/sqrt(N-)
    static CoherentSuperposition x1(double mu) {
        const double c = 1.0 / std::sqrt(n_plus_minus(mu).minus);
        return CoherentSuperposition({{c, 0.0, amp(mu)}, {-c, amp(mu), 0.0}});
    }
    static CoherentSuperposition bright_pair(double mu) {
        return CoherentSuperposition({{1.0, amp(mu), amp(mu)}});
    }
    static CoherentSuperposition vacuum_pair() {
        return CoherentSuperposition({{1.0, 0.0, 0.0}});
    }

private:
    static cplx amp(double mu) { return std::sqrt(mu); }
    std::vector<CoherentBranch> branches_;
};

// ---------------------------------------------------------------------------
// Receiver model
// ---------------------------------------------------------------------------

enum Det : int { D0 = 0, D1 = 1, D2 = 2 };

// End-to-end linear-optics path: fiber transmittance, passive basis splitter,
// interferometer on the X arm, threshold detectors with dark counts.
//
// Loss never truncates the branch structure: a loss channel of transmittance
// t followed by a threshold detector of efficiency eta has exactly the same
// no-click statistics as a detector of efficiency eta*t applied at the
// pre-loss amplitudes, because the environment overlap factor
// exp(-(1-t)(|a|^2/2 + |b|^2/2 - a* b)) recombines with the detector kernel
// into exp(-|a|^2/2 - |b|^2/2 + (1 - eta t) a* b). All per-arm constant
// losses (window selection, element insertion) are therefore folded into the
// per-detector efficiencies below.
struct OpticalPath {
    double transmittance = 1.0;        // fiber power transmission
    double interferometer_phase = 0.0; // radians; 0 = |aa> exits bright at D1
    double visibility = 1.0;
    std::array<double, 3> detector_eff = {1.0, 1.0, 1.0}; // D0, D1, D2
    std::array<double, 3> dark_prob = {0.0, 0.0, 0.0};    // per gate
    double z_split = 0.30;

    void validate() const {
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!in01(transmittance) || !in01(visibility) || !(z_split > 0.0 && z_split < 1.0))
            throw std::invalid_argument("OpticalPath: parameter outside range");
        for (double e : detector_eff)
            if (!in01(e)) throw std::invalid_argument("OpticalPath: efficiency outside [0,1]");
        for (double d : dark_prob)
            if (!in01(d)) throw std::invalid_argument("OpticalPath: dark_prob outside [0,1]");
    }
};

// Exact joint click statistics of one round. Detector modes are D0-early,
// D0-late (arrival-time measurement) and the central interference bin at D1
// and D2. "only" means that detector fired and no other did.
struct ClickProbabilities {
    // joint patterns over all four modes
    double none = 1.0;
    double d0_early_only = 0.0;
    double d0_late_only = 0.0;
    double d1_only = 0.0;
    double d2_only = 0.0;
    double multi = 0.0; // any pattern with >= 2 modes fired
    // marginals and X-arm joints
    double p_d0_early = 0.0, p_d0_late = 0.0;
    double p_d1 = 0.0, p_d2 = 0.0;
    double x_both = 0.0, x_none = 0.0;
    // exact pattern distribution; bit 0 = D0 early, 1 = D0 late, 2 = D1, 3 = D2
    std::array<double, 16> pattern{};
};

namespace detail {

// Linear map from source amplitudes (early, late) to one detector mode.
struct ModeMap {
    cplx early_coef;
    cplx late_coef;
    double eta;
    cplx apply_early(const CoherentBranch& b) const { return early_coef * b.early; }
    cplx value(const CoherentBranch& b) const {
        return early_coef * b.early + late_coef * b.late;
    }
};

// P(no click on every mode in `subset`) for the given branch set:
//   sum_ij ci* cj <psi_i|psi_j> exp(-sum_m eta_m (L_m a_i)* (L_m a_j))
inline double no_click_subset(const std::vector<CoherentBranch>& branches,
                              const std::vector<ModeMap>& modes,
                              unsigned subset) {
    cplx q = 0.0;
    for (const auto& bi : branches) {
        for (const auto& bj : branches) {
            cplx expo = 0.0;
            for (std::size_t m = 0; m < modes.size(); ++m) {
                if (!(subset >> m & 1u)) continue;
                expo -= modes[m].eta * std::conj(modes[m].value(bi)) * modes[m].value(bj);
            }
            q += std::conj(bi.coeff) * bj.coeff *
                 overlap(bi.early, bi.late, bj.early, bj.late) * std::exp(expo);
        }
    }
    return q.real();
}

struct PatternSet {
    // probability of each exact click pattern, bit m set = mode m fired
    std::array<double, 16> p{};
};

// Exact click-pattern distribution over the four detector modes
// (bit 0 = D0 early, 1 = D0 late, 2 = D1, 3 = D2), including dark counts.
inline PatternSet patterns_for(const std::vector<CoherentBranch>& branches,
                               const OpticalPath& path, bool swap_x_ports) {
    const double t = path.transmittance;
    const double gz = std::sqrt(t * path.z_split);
    const double gx = std::sqrt(t * (1.0 - path.z_split) / 2.0);
    const cplx ph = std::exp(cplx(0.0, path.interferometer_phase));

    std::vector<ModeMap> modes(4);
    modes[0] = {gz, 0.0, path.detector_eff[D0]};
    modes[1] = {0.0, gz, path.detector_eff[D0]};
    cplx d1e = gx, d1l = gx * ph, d2e = gx, d2l = -gx * ph;
    if (swap_x_ports) { std::swap(d1e, d2e); std::swap(d1l, d2l); }
    modes[2] = {d1e, d1l, path.detector_eff[D1]};
    modes[3] = {d2e, d2l, path.detector_eff[D2]};

    const std::array<double, 4> dark = {path.dark_prob[D0], path.dark_prob[D0],
                                        path.dark_prob[D1], path.dark_prob[D2]};

    // Q[S] = P(no click anywhere in S), darks compounded per mode.
    std::array<double, 16> q;
    for (unsigned s = 0; s < 16; ++s) {
        double v = no_click_subset(branches, modes, s);
        for (unsigned m = 0; m < 4; ++m)
            if (s >> m & 1u) v *= 1.0 - dark[m];
        q[s] = v;
    }

    // Moebius inversion: P(pattern T) = sum_{W subset of T} (-1)^|T\W| Q(~W).
    PatternSet out;
    for (unsigned tpat = 0; tpat < 16; ++tpat) {
        double acc = 0.0;
        // iterate subsets w of tpat
        unsigned w = tpat;
        for (;;) {
            int parity = std::popcount(tpat ^ w) & 1 ? -1 : 1;
            acc += parity * q[15u & ~w];
            if (w == 0) break;
            w = (w - 1) & tpat;
        }
        out.p[tpat] = std::max(0.0, acc);
    }
    return out;
}

} // namespace detail

// Exact per-round outcome probabilities. Imperfect visibility V is a
// phase-averaged interferometer: the ideal-port and swapped-port pattern
// distributions are mixed with weights (1+V)/2 and (1-V)/2, which reproduces
// a measured fringe visibility of exactly V.
inline ClickProbabilities click_probabilities(const CoherentSuperposition& state,
                                              const OpticalPath& path) {
    path.validate();
    if (std::abs(state.norm_sq() - 1.0) > 1e-10)
        throw std::invalid_argument("click_probabilities: unnormalized state");

    auto ideal = detail::patterns_for(state.branches(), path, false);
    detail::PatternSet mixed = ideal;
    if (path.visibility < 1.0) {
        auto swapped = detail::patterns_for(state.branches(), path, true);
        const double wb = 0.5 * (1.0 + path.visibility);
        const double wd = 0.5 * (1.0 - path.visibility);
        for (unsigned i = 0; i < 16; ++i)
            mixed.p[i] = wb * ideal.p[i] + wd * swapped.p[i];
    }

    ClickProbabilities out;
    out.pattern = mixed.p;
    out.none = mixed.p[0];
    out.d0_early_only = mixed.p[1];
    out.d0_late_only = mixed.p[2];
    out.d1_only = mixed.p[4];
    out.d2_only = mixed.p[8];
    out.multi = 0.0;
    for (unsigned tpat = 0; tpat < 16; ++tpat) {
        const bool e = tpat & 1, l = tpat & 2, d1 = tpat & 4, d2 = tpat & 8;
        if (e) out.p_d0_early += mixed.p[tpat];
        if (l) out.p_d0_late += mixed.p[tpat];
        if (d1) out.p_d1 += mixed.p[tpat];
        if (d2) out.p_d2 += mixed.p[tpat];
        if (d1 && d2) out.x_both += mixed.p[tpat];
        if (!d1 && !d2) out.x_none += mixed.p[tpat];
        if (std::popcount(tpat) >= 2) out.multi += mixed.p[tpat];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Algebraic identities used by the security analysis
// ---------------------------------------------------------------------------

// Trace distance between (|0z><0z| + |1z><1z|)/2 and
// (N+|0x><0x| + N-|1x><1x|)/4, evaluated in the two-dimensional span of
// {|0z>, |1z>} via the Gram matrix. Identically zero for every mu.
inline double density_mixture_gap(double mu) {
    if (!(mu > 0.0)) throw std::domain_error("density_mixture_gap: mu must be > 0");
    const double s = std::exp(-mu); // <0z|1z>
    // Orthonormalize {|0z>, |1z>}: |0z> = e1, |1z> = s e1 + r e2.
    const double r = std::sqrt(std::max(0.0, 1.0 - s * s));
    // Coefficient vectors of the four states in {e1, e2}.
    const std::array<double, 2> v0 = {1.0, 0.0};
    const std::array<double, 2> v1 = {s, r};
    const auto np = n_plus_minus(mu);
    const double cp = 1.0 / std::sqrt(np.plus), cm = 1.0 / std::sqrt(np.minus);
    const std::array<double, 2> x0 = {cp * (v0[0] + v1[0]), cp * (v0[1] + v1[1])};
    const std::array<double, 2> x1 = {cm * (v0[0] - v1[0]), cm * (v0[1] - v1[1])};

    auto outer_add = [](std::array<double, 4>& m, const std::array<double, 2>& v, double w) {
        m[0] += w * v[0] * v[0];
        m[1] += w * v[0] * v[1];
        m[2] += w * v[1] * v[0];
        m[3] += w * v[1] * v[1];
    };
    std::array<double, 4> rho_z{}, rho_x{};
    outer_add(rho_z, v0, 0.5);
    outer_add(rho_z, v1, 0.5);
    outer_add(rho_x, x0, np.plus / 4.0);
    outer_add(rho_x, x1, np.minus / 4.0);

    const std::array<double, 4> d = {rho_z[0] - rho_x[0], rho_z[1] - rho_x[1],
                                     rho_z[2] - rho_x[2], rho_z[3] - rho_x[3]};
    // Trace distance of a symmetric 2x2: half the sum of |eigenvalues|.
    const double tr = d[0] + d[3];
    const double det = d[0] * d[3] - d[1] * d[2];
    const double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
    const double l1 = 0.5 * (tr + disc), l2 = 0.5 * (tr - disc);
    return 0.5 * (std::abs(l1) + std::abs(l2));
}

// Expected single-click counts at D1/D2 for the virtual X decomposition of
// the Z-basis ensemble, together with the counts had the Z states been sent.
// `n_rounds` is the number of rounds carrying the ensemble. Satisfies the
// click identity n_{1x}^{Di} + n_{0x}^{Di} = n_{1z}^{Di} + n_{0z}^{Di}.
struct VirtualCounts {
    double n_0x_d1 = 0, n_0x_d2 = 0;
    double n_1x_d1 = 0, n_1x_d2 = 0;
    double n_0z_d1 = 0, n_0z_d2 = 0;
    double n_1z_d1 = 0, n_1z_d2 = 0;
};

inline VirtualCounts expected_counts_virtual(const ProtocolParams& params,
                                             const OpticalPath& path,
                                             double n_rounds) {
    const double mu = params.mu;
    const auto np = n_plus_minus(mu);
    const auto c0x = click_probabilities(CoherentSuperposition::x0(mu), path);
    const auto c1x = click_probabilities(CoherentSuperposition::x1(mu), path);
    const auto c0z = click_probabilities(CoherentSuperposition::z0(mu), path);
    const auto c1z = click_probabilities(CoherentSuperposition::z1(mu), path);

    VirtualCounts v;
    v.n_0x_d1 = n_rounds * (np.plus / 4.0) * c0x.d1_only;
    v.n_0x_d2 = n_rounds * (np.plus / 4.0) * c0x.d2_only;
    v.n_1x_d1 = n_rounds * (np.minus / 4.0) * c1x.d1_only;
    v.n_1x_d2 = n_rounds * (np.minus / 4.0) * c1x.d2_only;
    v.n_0z_d1 = n_rounds * 0.5 * c0z.d1_only;
    v.n_0z_d2 = n_rounds * 0.5 * c0z.d2_only;
    v.n_1z_d1 = n_rounds * 0.5 * c1z.d1_only;
    v.n_1z_d2 = n_rounds * 0.5 * c1z.d2_only;
    return v;
}

} // namespace cowqkd::quantum
