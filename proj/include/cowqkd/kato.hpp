#pragma once

#include <algorithm>
#include <stdexcept>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace cowqkd::fk {

// Concentration bound relating an observed sum of [0,1]-valued variables to
// the sum of conditional expectations, with per-use failure probability eps.
struct KatoInput {
    double gamma_k; // observed sum
    double k;       // number of trials
    double eps;     // failure probability for this use

    void validate() const {
        if (!(k >= 1.0)) throw std::invalid_argument("KatoInput: k must be >= 1");
        if (!(gamma_k >= 0.0 && gamma_k <= k))
            throw std::invalid_argument("KatoInput: gamma_k outside [0, k]");
        if (!(eps > 0.0 && eps < 1.0))
            throw std::invalid_argument("KatoInput: eps outside (0,1)");
    }
};

struct KatoBound {
    double a = 0.0;
    double b = 0.0;
    double delta = 0.0; // one-sided width
    double value = 0.0; // widened/narrowed expectation estimate
};

namespace detail {

// 50 significant decimal digits. The optimal-parameter expressions cancel
// nine-plus leading digits at experimental scales (k ~ 1e11), which double
// precision cannot absorb.
using mpf = boost::multiprecision::cpp_bin_float_50;

struct KatoTerms {
    mpf g, k, le, sqrt_k, C, denom;
};

inline KatoTerms kato_terms(const KatoInput& in) {
    KatoTerms t;
    t.g = in.gamma_k;
    t.k = in.k;
    t.le = log(mpf(in.eps)); // negative
    t.sqrt_k = sqrt(t.k);
    const mpf gk = t.g * (t.k - t.g);
    t.C = sqrt(-t.k * t.k * t.le * (9 * gk - 2 * t.k * t.le));
    t.denom = 4 * (9 * t.k - 8 * t.le) * (9 * gk - 2 * t.k * t.le);
    return t;
}

} // namespace detail

// Upper estimate of the expectation sum: Gamma_k + Delta1.
inline KatoBound kato_upper(const KatoInput& in) {
    in.validate();
    using detail::mpf;
    auto t = detail::kato_terms(in);
    const mpf gk = t.g * (t.k - t.g);
    const mpf a1 = 3 * (72 * t.sqrt_k * gk * t.le - 16 * t.k * t.sqrt_k * t.le * t.le +
                        9 * sqrt(mpf(2)) * (t.k - 2 * t.g) * t.C) /
                   t.denom;
    const mpf b1 = sqrt(18 * a1 * a1 * t.k -
                        (16 * a1 * a1 + 24 * a1 * t.sqrt_k + 9 * t.k) * t.le) /
                   (3 * sqrt(2 * t.k));
    const mpf delta = (b1 + a1 * (2 * t.g / t.k - 1)) * t.sqrt_k;
    KatoBound out;
    out.a = static_cast<double>(a1);
    out.b = static_cast<double>(b1);
    out.delta = static_cast<double>(delta);
    out.value = static_cast<double>(t.g + delta);
    return out;
}

// Lower estimate of the expectation sum: max(0, Gamma_k - Delta2).
inline KatoBound kato_lower(const KatoInput& in) {
    in.validate();
    using detail::mpf;
    auto t = detail::kato_terms(in);
    const mpf gk = t.g * (t.k - t.g);
    const mpf a2 = -3 * (72 * t.sqrt_k * gk * t.le - 16 * t.k * t.sqrt_k * t.le * t.le -
                         9 * sqrt(mpf(2)) * (t.k - 2 * t.g) * t.C) /
                   t.denom;
    const mpf b2 = sqrt(18 * a2 * a2 * t.k -
                        (16 * a2 * a2 - 24 * a2 * t.sqrt_k + 9 * t.k) * t.le) /
                   (3 * sqrt(2 * t.k));
    const mpf delta = (b2 + a2 * (2 * t.g / t.k - 1)) * t.sqrt_k;
    KatoBound out;
    out.a = static_cast<double>(a2);
    out.b = static_cast<double>(b2);
    out.delta = static_cast<double>(delta);
    out.value = std::max(0.0, static_cast<double>(t.g - delta));
    return out;
}

} // namespace cowqkd::fk
