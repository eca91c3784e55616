#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace cowqkd {

// ---------------------------------------------------------------------------
// Protocol constants and scalar math shared by every other module.
// ---------------------------------------------------------------------------

// Binary Shannon entropy h(x) = -x log2 x - (1-x) log2 (1-x), with the
// continuity convention 0 log2 0 = 0.
inline double binary_entropy(double x) {
    if (!(x >= 0.0 && x <= 1.0))
        throw std::domain_error("binary_entropy: argument outside [0,1]");
    if (x == 0.0 || x == 1.0) return 0.0;
    return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

// Normalization factors N± = 2(1 ± e^-mu) of the X-basis superpositions.
struct NormPair {
    double plus;
    double minus;
};

inline NormPair n_plus_minus(double mu) {
    if (mu < 0.0) throw std::domain_error("n_plus_minus: negative intensity");
    const double e = std::exp(-mu);
    return {2.0 * (1.0 + e), 2.0 * (1.0 - e)};
}

// Source-side configuration. The X basis consists of the two monitoring
// states, so p_x = p_0 + p_alpha_alpha and p_z + p_x = 1.
struct ProtocolParams {
    double mu = 2.43e-4;
    double p_z = 0.80;
    double p_0 = 0.10;
    double p_alpha_alpha = 0.10;
    double z_split = 0.30;
    double repetition_hz = 5.0e8;

    double p_x() const { return p_0 + p_alpha_alpha; }

    // Validates invariants; renormalizes the three probabilities if the sum
    // deviates by no more than `tol`, errors beyond it.
    void validate(double tol = 1e-12) {
        if (!(mu > 0.0)) throw std::invalid_argument("ProtocolParams: mu must be > 0");
        if (!(z_split > 0.0 && z_split < 1.0))
            throw std::invalid_argument("ProtocolParams: z_split must be in (0,1)");
        if (!(repetition_hz > 0.0))
            throw std::invalid_argument("ProtocolParams: repetition_hz must be > 0");
        if (p_z < 0 || p_0 < 0 || p_alpha_alpha < 0)
            throw std::invalid_argument("ProtocolParams: negative probability");
        const double sum = p_z + p_0 + p_alpha_alpha;
        if (std::abs(sum - 1.0) > tol) {
            if (std::abs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("ProtocolParams: probabilities sum to " +
                                            std::to_string(sum));
            p_z /= sum;
            p_0 /= sum;
            p_alpha_alpha /= sum;
        }
    }
};

// The seven concentration-bound uses of one key-length evaluation.
enum class EpsUse : int {
    upper_aa_d1 = 0,
    upper_aa_d2 = 1,
    upper_00_d1 = 2,
    upper_00_d2 = 3,
    lower_aa_d1 = 4,
    lower_00_d1 = 5,
    phase_obs = 6, // expectation -> observation step for phase errors
};

constexpr int kEpsUseCount = 7;

struct EpsilonBudget {
    std::array<double, kEpsUseCount> eps;
    double operator[](EpsUse u) const { return eps[static_cast<int>(u)]; }
};

struct SecurityParams {
    double eps_cor = 1e-15;
    double eps_sec = 1e-10;
    // Optional per-use overrides; indexes into EpsUse. Empty -> equal split.
    std::map<int, double> eps_overrides;

    void validate() const {
        if (!(eps_cor > 0.0 && eps_cor < 1.0))
            throw std::invalid_argument("SecurityParams: eps_cor outside (0,1)");
        if (!(eps_sec > 0.0 && eps_sec < 1.0))
            throw std::invalid_argument("SecurityParams: eps_sec outside (0,1)");
        for (auto& [k, v] : eps_overrides) {
            if (k < 0 || k >= kEpsUseCount)
                throw std::invalid_argument("SecurityParams: unknown eps override index");
            if (!(v > 0.0 && v < 1.0))
                throw std::invalid_argument("SecurityParams: eps override outside (0,1)");
        }
    }
};

// Deterministic allocation of eps_sec across the seven concentration-bound
// uses: equal division unless overridden.
inline EpsilonBudget epsilon_budget(const SecurityParams& sec) {
    sec.validate();
    EpsilonBudget b;
    for (int i = 0; i < kEpsUseCount; ++i) {
        auto it = sec.eps_overrides.find(i);
        b.eps[i] = it != sec.eps_overrides.end() ? it->second
                                                 : sec.eps_sec / kEpsUseCount;
    }
    return b;
}

// ---------------------------------------------------------------------------
// Round encoding
// ---------------------------------------------------------------------------

enum class Basis : std::uint8_t { Z = 0, X = 1 };
enum class XChoice : std::uint8_t { vacuum_pair = 0, bright_pair = 1 };

// One logical round: a pulse pair with early/late intensities in {0, mu}.
struct LogicalRound {
    Basis basis;
    std::uint8_t z_bit = 0;          // valid when basis == Z
    XChoice x_state = XChoice::vacuum_pair; // valid when basis == X
    double early = 0.0;
    double late = 0.0;
};

inline LogicalRound encode_round(Basis basis, int bit_or_xchoice, double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("encode_round: mu must be > 0");
    LogicalRound r;
    r.basis = basis;
    if (basis == Basis::Z) {
        if (bit_or_xchoice != 0 && bit_or_xchoice != 1)
            throw std::invalid_argument("encode_round: Z bit must be 0 or 1");
        r.z_bit = static_cast<std::uint8_t>(bit_or_xchoice);
        // bit 0 -> |0>|alpha>, bit 1 -> |alpha>|0>
        r.early = bit_or_xchoice == 1 ? mu : 0.0;
        r.late = bit_or_xchoice == 1 ? 0.0 : mu;
    } else {
        if (bit_or_xchoice != 0 && bit_or_xchoice != 1)
            throw std::invalid_argument("encode_round: X choice must be 0 or 1");
        r.x_state = static_cast<XChoice>(bit_or_xchoice);
        const double amp = r.x_state == XChoice::bright_pair ? mu : 0.0;
        r.early = amp;
        r.late = amp;
    }
    return r;
}

} // namespace cowqkd
