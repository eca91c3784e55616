#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cowqkd/channel.hpp"
#include "cowqkd/core.hpp"
#include "cowqkd/finitekey.hpp"
#include "cowqkd/quantum.hpp"

namespace cowqkd::opt {

// Objective route. The bound pipeline evaluates the full monitoring-state
// security calculus on analytic expected counts; the simulated route takes
// the model's own virtual-state error rate (the curve a simulation plot
// shows) and skips the monitoring bounds.
enum class ObjectiveMode { bound_pipeline, simulated_direct };

struct VarRange {
    double lo, hi;
};

struct OptimizationProblem {
    channel::ChannelParams channel;
    double n_pulses = 1e12;
    SecurityParams security;
    VarRange mu{1e-5, 1.0};
    VarRange p_0{0.01, 0.3};
    VarRange p_aa{0.01, 0.3};
    VarRange z_split{0.1, 0.9};
    ObjectiveMode mode = ObjectiveMode::bound_pipeline;
    fk::A18Form form = fk::A18Form::verbatim_counts;
    double f_ec = 1.10;
    double repetition_hz = 5.0e8;

    void validate() const {
        auto ok = [](const VarRange& r) { return r.lo > 0 && r.lo <= r.hi; };
        if (!ok(mu) || !ok(p_0) || !ok(p_aa) || !ok(z_split))
            throw std::invalid_argument("OptimizationProblem: infeasible bounds");
        if (p_0.hi + p_aa.hi >= 1.0)
            throw std::invalid_argument("OptimizationProblem: p_0 + p_aa can reach 1");
    }
};

struct TraceEntry {
    double mu, p_0, p_aa, z_split;
    double rate_bps;
};

struct OptimizeResult {
    ProtocolParams best;
    double best_rate = 0.0;
    std::vector<TraceEntry> trace;
    std::uint64_t evaluations = 0;
};

inline double objective_rate(const OptimizationProblem& prob, const ProtocolParams& pr) {
    channel::ChannelParams ch = prob.channel;
    ch.z_split = pr.z_split;
    auto exp = channel::expected_counts(ch, pr, prob.n_pulses);
    if (!(exp.n_z >= 1.0)) return 0.0;
    auto counts = exp.rounded();
    if (prob.mode == ObjectiveMode::bound_pipeline) {
        fk::PipelineOptions opt;
        opt.form = prob.form;
        opt.leak_mode = fk::LeakMode::analytic;
        opt.f_ec = prob.f_ec;
        opt.repetition_hz = prob.repetition_hz;
        try {
            return fk::evaluate_pipeline(counts, prob.security, opt).rate_bps;
        } catch (const std::exception&) {
            return 0.0;
        }
    }
    // simulated route: the model's own phase error rate
    auto path = ch.to_optical_path();
    const double rounds_z = (prob.n_pulses / 2.0) * pr.p_z;
    auto v = quantum::expected_counts_virtual(pr, path, rounds_z);
    const double denom = v.n_0x_d1 + v.n_0x_d2 + v.n_1x_d1 + v.n_1x_d2;
    if (!(denom > 0.0)) return 0.0;
    const double ex = (v.n_0x_d2 + v.n_1x_d1) / denom;
    const auto budget = epsilon_budget(prob.security);
    const double n_z = exp.n_z;
    const double delta_p = std::sqrt(0.5 * n_z * std::log(1.0 / budget[EpsUse::phase_obs]));
    const double ep = std::clamp(ex + delta_p / n_z, 0.0, 0.5);
    const double leak = prob.f_ec * n_z * binary_entropy(exp.e_z_defined ? exp.E_z : 0.0);
    const double l = fk::eq1_key_length(n_z, ep, leak, prob.security);
    if (l <= 0.0) return 0.0;
    return l * prob.repetition_hz / prob.n_pulses;
}

// Coordinate-refined grid search: one coarse pass over a log grid in mu and
// linear grids in the probabilities, then `refine_passes` passes with spans
// halved around the incumbent. Deterministic; ties resolve to the lowest
// grid index. The seed only labels the trace.
inline OptimizeResult optimize(const OptimizationProblem& prob, std::uint64_t eval_budget,
                               std::uint64_t seed = 0) {
    (void)seed;
    prob.validate();
    const int refine_passes = 2;
    // per-dimension point counts sized to the evaluation budget
    int n_mu = 9, n_p = 4, n_z = 5;
    while (static_cast<std::uint64_t>(n_mu) * n_p * n_p * n_z * (refine_passes + 1) >
               eval_budget &&
           n_mu > 3) {
        if (n_mu > 5) --n_mu;
        else if (n_p > 3) --n_p;
        else --n_z;
        if (n_mu == 3 && n_p == 3 && n_z == 3) break;
    }

    OptimizeResult res;
    res.best_rate = -1.0;

    VarRange rmu = prob.mu, rp0 = prob.p_0, rpa = prob.p_aa, rz = prob.z_split;
    auto grid_lin = [](const VarRange& r, int n) {
        std::vector<double> g(n);
        for (int i = 0; i < n; ++i)
            g[i] = n == 1 ? r.lo : r.lo + (r.hi - r.lo) * i / (n - 1);
        return g;
    };
    auto grid_log = [](const VarRange& r, int n) {
        std::vector<double> g(n);
        const double llo = std::log(r.lo), lhi = std::log(r.hi);
        for (int i = 0; i < n; ++i)
            g[i] = n == 1 ? r.lo : std::exp(llo + (lhi - llo) * i / (n - 1));
        return g;
    };

    for (int pass = 0; pass <= refine_passes; ++pass) {
        const auto gmu = grid_log(rmu, n_mu);
        const auto gp0 = grid_lin(rp0, n_p);
        const auto gpa = grid_lin(rpa, n_p);
        const auto gz = grid_lin(rz, n_z);
        for (double mu : gmu)
            for (double p0 : gp0)
                for (double pa : gpa) {
                    if (p0 + pa >= 0.999) continue;
                    for (double z : gz) {
                        ProtocolParams pr;
                        pr.mu = mu;
                        pr.p_0 = p0;
                        pr.p_alpha_alpha = pa;
                        pr.p_z = 1.0 - p0 - pa;
                        pr.z_split = z;
                        pr.repetition_hz = prob.repetition_hz;
                        const double rate = objective_rate(prob, pr);
                        res.trace.push_back({mu, p0, pa, z, rate});
                        ++res.evaluations;
                        if (rate > res.best_rate) {
                            res.best_rate = rate;
                            res.best = pr;
                        }
                    }
                }
        // halve spans around the incumbent
        auto shrink_lin = [](VarRange& r, double center, const VarRange& outer) {
            const double half = (r.hi - r.lo) / 4.0;
            r.lo = std::max(outer.lo, center - half);
            r.hi = std::min(outer.hi, center + half);
        };
        auto shrink_log = [](VarRange& r, double center, const VarRange& outer) {
            const double half = (std::log(r.hi) - std::log(r.lo)) / 4.0;
            r.lo = std::max(outer.lo, std::exp(std::log(center) - half));
            r.hi = std::min(outer.hi, std::exp(std::log(center) + half));
        };
        shrink_log(rmu, res.best.mu, prob.mu);
        shrink_lin(rp0, res.best.p_0, prob.p_0);
        shrink_lin(rpa, res.best.p_alpha_alpha, prob.p_aa);
        shrink_lin(rz, res.best.z_split, prob.z_split);
    }
    if (res.best_rate < 0) res.best_rate = 0;
    return res;
}

} // namespace cowqkd::opt
