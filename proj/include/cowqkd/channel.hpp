#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cowqkd/bitvec.hpp"
#include "cowqkd/core.hpp"
#include "cowqkd/quantum.hpp"
#include "cowqkd/rng.hpp"

namespace cowqkd::channel {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// Receiver-element insertion losses (dB). The quoted detector efficiencies
// already include these element losses, so the default extra-loss map is
// empty; the table is available for what-if runs against a bare-detector
// model.
inline const std::map<std::string, double>& reference_insertion_losses_db() {
    static const std::map<std::string, double> t = {
        {"cir_1_2", 0.51}, {"cir_2_3", 0.47}, {"bs_70", 0.20}, {"bs_30", 0.37},
        {"pc_0", 0.10},    {"pc_1", 0.08},    {"pc_2", 0.17},
    };
    return t;
}

struct ChannelParams {
    double distance_km = 100.0;
    double atten_db_per_km = 0.161;
    double eff_d0 = 0.762;
    double eff_d1 = 0.46;
    double eff_d2 = 0.46;
    double dark_hz_d0 = 7.0;
    double dark_hz_d1 = 1.0;
    double dark_hz_d2 = 11.0;
    double gate_s = 800e-12; // detection gate; pulse-pair delay by default
    double visibility = 0.99;
    double window_loss_db = 3.0; // X-arm time-window selection
    // Extra per-element losses applied on top of the detector efficiencies.
    // Element -> arm assignment: bs_30, pc_0 -> D0; bs_70, cir_1_2, cir_2_3 ->
    // both X detectors; pc_1 -> D1; pc_2 -> D2. Unknown names are rejected.
    std::map<std::string, double> insertion_losses_db;
    double z_split = 0.30;
    // Fraction of D1 detection records randomly discarded. The default
    // balances the X-basis total count rate at 70.4% of the Z rate.
    double d1_thinning = -1.0; // negative -> derived default
    double z_error_intrinsic = 0.002; // wrong-slot probability per Z click

    double derived_d1_thinning() const {
        const double w = std::pow(10.0, -window_loss_db / 10.0);
        const double ratio0 = ((1.0 - z_split) * w * eff_d1) / (z_split * eff_d0);
        return std::clamp(2.0 * (1.0 - 0.704 / ratio0), 0.0, 1.0);
    }
    double effective_d1_thinning() const {
        return d1_thinning < 0.0 ? derived_d1_thinning() : d1_thinning;
    }

    void validate() const {
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (distance_km < 0 || atten_db_per_km < 0 || window_loss_db < 0)
            throw std::invalid_argument("ChannelParams: negative loss");
        if (!in01(eff_d0) || !in01(eff_d1) || !in01(eff_d2) || !in01(visibility))
            throw std::invalid_argument("ChannelParams: efficiency/visibility outside [0,1]");
        if (dark_hz_d0 < 0 || dark_hz_d1 < 0 || dark_hz_d2 < 0 || gate_s < 0)
            throw std::invalid_argument("ChannelParams: negative dark rate or gate");
        if (!(z_split > 0.0 && z_split < 1.0))
            throw std::invalid_argument("ChannelParams: z_split outside (0,1)");
        if (d1_thinning > 1.0)
            throw std::invalid_argument("ChannelParams: d1_thinning > 1");
        if (!in01(z_error_intrinsic))
            throw std::invalid_argument("ChannelParams: z_error_intrinsic outside [0,1]");
        for (auto& [name, db] : insertion_losses_db) {
            if (!reference_insertion_losses_db().count(name))
                throw std::invalid_argument("ChannelParams: unknown optical element " + name);
            if (db < 0) throw std::invalid_argument("ChannelParams: negative insertion loss");
        }
    }

    quantum::OpticalPath to_optical_path() const {
        validate();
        auto db_of = [&](const char* name) {
            auto it = insertion_losses_db.find(name);
            return it == insertion_losses_db.end() ? 0.0 : it->second;
        };
        auto lin = [](double db) { return std::pow(10.0, -db / 10.0); };
        quantum::OpticalPath p;
        p.transmittance = lin(atten_db_per_km * distance_km);
        p.z_split = z_split;
        p.visibility = visibility;
        const double x_common = window_loss_db + db_of("bs_70") + db_of("cir_1_2") +
                                db_of("cir_2_3");
        p.detector_eff = {eff_d0 * lin(db_of("bs_30") + db_of("pc_0")),
                          eff_d1 * lin(x_common + db_of("pc_1")),
                          eff_d2 * lin(x_common + db_of("pc_2"))};
        p.dark_prob = {dark_hz_d0 * gate_s, dark_hz_d1 * gate_s, dark_hz_d2 * gate_s};
        return p;
    }
};

// ---------------------------------------------------------------------------
// Counts
// ---------------------------------------------------------------------------

struct CountsRecord {
    std::uint64_t N = 0; // total emitted pulses (two per round)
    double mu = 0.0;
    std::uint64_t n_z = 0;
    double E_z = 0.0;
    std::uint64_t n_00_d0 = 0;
    std::uint64_t n_00_d1 = 0, n_00_d2 = 0;
    std::uint64_t n_0a_d1 = 0, n_0a_d2 = 0;
    std::uint64_t n_a0_d1 = 0, n_a0_d2 = 0;
    std::uint64_t n_aa_d1 = 0, n_aa_d2 = 0;
    std::optional<std::uint64_t> n_00_d1_refined, n_00_d2_refined;
    // pre-replacement values, populated by refine_counts
    std::optional<std::uint64_t> n_00_d1_raw, n_00_d2_raw;
    double P_00 = 0.1, P_aa = 0.1;

    std::uint64_t rounds() const { return N / 2; }

    void validate() const {
        if (E_z < 0.0 || E_z > 1.0) throw std::invalid_argument("CountsRecord: E_z outside [0,1]");
        if (P_00 <= 0.0 || P_aa <= 0.0 || P_00 + P_aa > 1.0)
            throw std::invalid_argument("CountsRecord: bad state probabilities");
        for (std::uint64_t c : {n_z, n_00_d0, n_00_d1, n_00_d2, n_0a_d1, n_0a_d2,
                                n_a0_d1, n_a0_d2, n_aa_d1, n_aa_d2})
            if (c > N) throw std::invalid_argument("CountsRecord: count exceeds N");
    }
};

// Real-valued expectation of a run; rounds to a CountsRecord.
struct CountsExpectation {
    double N = 0;
    double mu = 0;
    double n_z = 0;
    double E_z = 0;
    bool e_z_defined = true;
    double n_00_d0 = 0;
    double n_00_d1 = 0, n_00_d2 = 0;
    double n_0a_d1 = 0, n_0a_d2 = 0;
    double n_a0_d1 = 0, n_a0_d2 = 0;
    double n_aa_d1 = 0, n_aa_d2 = 0;
    double P_00 = 0.1, P_aa = 0.1;

    CountsRecord rounded() const {
        CountsRecord r;
        auto rd = [](double v) { return static_cast<std::uint64_t>(std::llround(std::max(0.0, v))); };
        r.N = rd(N);
        r.mu = mu;
        r.n_z = rd(n_z);
        r.E_z = e_z_defined ? E_z : 0.0;
        r.n_00_d0 = rd(n_00_d0);
        r.n_00_d1 = rd(n_00_d1);
        r.n_00_d2 = rd(n_00_d2);
        r.n_0a_d1 = rd(n_0a_d1);
        r.n_0a_d2 = rd(n_0a_d2);
        r.n_a0_d1 = rd(n_a0_d1);
        r.n_a0_d2 = rd(n_a0_d2);
        r.n_aa_d1 = rd(n_aa_d1);
        r.n_aa_d2 = rd(n_aa_d2);
        r.P_00 = P_00;
        r.P_aa = P_aa;
        return r;
    }
};

namespace detail {

enum class SentState : std::uint8_t { z_bit0 = 0, z_bit1 = 1, vacuum = 2, bright = 3 };

// Exhaustive per-round outcome classes after thinning and intrinsic slot
// errors. Multi-click rounds are discarded by sifting but kept as a class.
enum class Outcome : std::uint8_t {
    none = 0,
    z_early = 1, // single click, early slot -> logic 1
    z_late = 2,  // single click, late slot -> logic 0
    x_d1 = 3,
    x_d2 = 4,
    multi = 5,
};

struct OutcomeTable {
    std::array<double, 6> p{};
};

// Applies D1 record thinning to the exact pattern distribution: any pattern
// with the D1 bit set loses it with probability tau.
inline std::array<double, 16> thin_patterns(const std::array<double, 16>& pat, double tau) {
    if (tau <= 0.0) return pat;
    std::array<double, 16> out{};
    for (unsigned t = 0; t < 16; ++t) {
        if (t & 4u) {
            out[t] += pat[t] * (1.0 - tau);
            out[t & ~4u] += pat[t] * tau;
        } else {
            out[t] += pat[t];
        }
    }
    return out;
}

inline OutcomeTable outcome_table(const quantum::ClickProbabilities& cp, double tau,
                                  double z_err) {
    auto pat = thin_patterns(cp.pattern, tau);
    OutcomeTable t;
    double early = pat[1], late = pat[2];
    // intrinsic wrong-slot probability swaps the recorded slot
    t.p[static_cast<int>(Outcome::z_early)] = (1.0 - z_err) * early + z_err * late;
    t.p[static_cast<int>(Outcome::z_late)] = (1.0 - z_err) * late + z_err * early;
    t.p[static_cast<int>(Outcome::x_d1)] = pat[4];
    t.p[static_cast<int>(Outcome::x_d2)] = pat[8];
    t.p[static_cast<int>(Outcome::none)] = pat[0];
    double multi = 0.0;
    for (unsigned i = 0; i < 16; ++i)
        if (std::popcount(i) >= 2) multi += pat[i];
    t.p[static_cast<int>(Outcome::multi)] = multi;
    return t;
}

struct StateModel {
    std::array<OutcomeTable, 4> per_state; // indexed by SentState
    std::array<double, 4> p_state;         // emission probabilities
};

inline StateModel build_state_model(const ChannelParams& ch, const ProtocolParams& pr) {
    auto path = ch.to_optical_path();
    const double tau = ch.effective_d1_thinning();
    StateModel m;
    const double mu = pr.mu;
    m.per_state[0] = outcome_table(
        quantum::click_probabilities(quantum::CoherentSuperposition::z0(mu), path), tau,
        ch.z_error_intrinsic);
    m.per_state[1] = outcome_table(
        quantum::click_probabilities(quantum::CoherentSuperposition::z1(mu), path), tau,
        ch.z_error_intrinsic);
    m.per_state[2] = outcome_table(
        quantum::click_probabilities(quantum::CoherentSuperposition::vacuum_pair(), path),
        tau, ch.z_error_intrinsic);
    m.per_state[3] = outcome_table(
        quantum::click_probabilities(quantum::CoherentSuperposition::bright_pair(mu), path),
        tau, ch.z_error_intrinsic);
    m.p_state = {pr.p_z / 2.0, pr.p_z / 2.0, pr.p_0, pr.p_alpha_alpha};
    return m;
}

} // namespace detail

// Analytic expected counts for N emitted pulses (N/2 rounds).
inline CountsExpectation expected_counts(const ChannelParams& ch, ProtocolParams pr,
                                         double n_pulses) {
    pr.validate();
    if (n_pulses < 0) throw std::invalid_argument("expected_counts: negative pulse count");
    auto m = detail::build_state_model(ch, pr);
    const double rounds = n_pulses / 2.0;
    using detail::Outcome;
    using detail::SentState;
    auto p = [&](SentState s, Outcome o) {
        return m.per_state[static_cast<int>(s)].p[static_cast<int>(o)];
    };

    CountsExpectation e;
    e.N = n_pulses;
    e.mu = pr.mu;
    e.P_00 = pr.p_0;
    e.P_aa = pr.p_alpha_alpha;

    const double r0 = rounds * m.p_state[0]; // |0>|alpha>, bit 0
    const double r1 = rounds * m.p_state[1]; // |alpha>|0>, bit 1
    const double rv = rounds * m.p_state[2];
    const double rb = rounds * m.p_state[3];

    const double sig0 = r0 * (p(SentState::z_bit0, Outcome::z_early) +
                              p(SentState::z_bit0, Outcome::z_late));
    const double sig1 = r1 * (p(SentState::z_bit1, Outcome::z_early) +
                              p(SentState::z_bit1, Outcome::z_late));
    e.n_z = sig0 + sig1;
    // bit 0 is carried by the late slot, so an early click is an error
    const double errs = r0 * p(SentState::z_bit0, Outcome::z_early) +
                        r1 * p(SentState::z_bit1, Outcome::z_late);
    if (e.n_z > 0) {
        e.E_z = errs / e.n_z;
    } else {
        e.E_z = 0.0;
        e.e_z_defined = false;
    }

    e.n_00_d0 = rv * (p(SentState::vacuum, Outcome::z_early) +
                      p(SentState::vacuum, Outcome::z_late));
    e.n_00_d1 = rv * p(SentState::vacuum, Outcome::x_d1);
    e.n_00_d2 = rv * p(SentState::vacuum, Outcome::x_d2);
    e.n_0a_d1 = r0 * p(SentState::z_bit0, Outcome::x_d1);
    e.n_0a_d2 = r0 * p(SentState::z_bit0, Outcome::x_d2);
    e.n_a0_d1 = r1 * p(SentState::z_bit1, Outcome::x_d1);
    e.n_a0_d2 = r1 * p(SentState::z_bit1, Outcome::x_d2);
    e.n_aa_d1 = rb * p(SentState::bright, Outcome::x_d1);
    e.n_aa_d2 = rb * p(SentState::bright, Outcome::x_d2);
    return e;
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

// One retained detection event of a logged run.
struct RoundRecord {
    std::uint64_t round = 0;
    std::uint8_t alice_state = 0; // detail::SentState
    std::uint8_t outcome = 0;     // detail::Outcome
    std::uint8_t slot = 0xff;     // 0 early / 1 late for Z clicks
    std::uint8_t bob_bit = 0xff;  // decoded logic bit for Z clicks
};

struct SampleRun {
    CountsRecord counts;
    std::vector<RoundRecord> log; // detection events only; empty in aggregate mode
    BitVec alice_raw_key;         // Alice's bits on sifted rounds
    BitVec bob_raw_key;           // Bob's decoded bits on the same rounds
    std::vector<std::uint64_t> sifted_rounds;
    bool logged = false;
};

inline constexpr std::uint64_t kMaxLoggedPulses = 1'000'000'000ULL;

// Deterministic seeded run. Per-round logging (and raw keys) below
// kMaxLoggedPulses; exact per-cell binomial aggregation above.
inline SampleRun sample_run(const ChannelParams& ch, ProtocolParams pr,
                            std::uint64_t n_pulses, std::uint64_t seed,
                            bool want_log = true) {
    pr.validate();
    auto m = detail::build_state_model(ch, pr);
    const std::uint64_t rounds = n_pulses / 2;
    SampleRun run;
    run.counts.N = n_pulses;
    run.counts.mu = pr.mu;
    run.counts.P_00 = pr.p_0;
    run.counts.P_aa = pr.p_alpha_alpha;

    using detail::Outcome;

    double errs = 0;
    if (want_log && n_pulses <= kMaxLoggedPulses) {
        run.logged = true;
        Xoshiro256 rng = Xoshiro256::substream(seed, 0);
        // cumulative state distribution
        std::array<double, 4> cstate;
        double acc = 0;
        for (int s = 0; s < 4; ++s) cstate[s] = (acc += m.p_state[s]);
        std::array<std::array<double, 6>, 4> cout{};
        for (int s = 0; s < 4; ++s) {
            double a2 = 0;
            for (int o = 0; o < 6; ++o) cout[s][o] = (a2 += m.per_state[s].p[o]);
        }
        for (std::uint64_t r = 0; r < rounds; ++r) {
            const double us = rng.uniform();
            int s = 0;
            while (s < 3 && us >= cstate[s]) ++s;
            const double uo = rng.uniform();
            int o = 0;
            while (o < 5 && uo >= cout[s][o]) ++o;
            if (o == static_cast<int>(Outcome::none)) continue;

            RoundRecord rec;
            rec.round = r;
            rec.alice_state = static_cast<std::uint8_t>(s);
            rec.outcome = static_cast<std::uint8_t>(o);
            const auto oc = static_cast<Outcome>(o);
            if (oc == Outcome::z_early || oc == Outcome::z_late) {
                rec.slot = oc == Outcome::z_early ? 0 : 1;
                rec.bob_bit = oc == Outcome::z_early ? 1 : 0; // early slot = logic 1
                if (s <= 1) {
                    run.counts.n_z++;
                    if (rec.bob_bit != s) errs += 1;
                    run.sifted_rounds.push_back(r);
                    run.alice_raw_key.push_back(s == 1);
                    run.bob_raw_key.push_back(rec.bob_bit == 1);
                } else if (s == 2) {
                    run.counts.n_00_d0++;
                }
            } else if (oc == Outcome::x_d1) {
                if (s == 0) run.counts.n_0a_d1++;
                else if (s == 1) run.counts.n_a0_d1++;
                else if (s == 2) run.counts.n_00_d1++;
                else run.counts.n_aa_d1++;
            } else if (oc == Outcome::x_d2) {
                if (s == 0) run.counts.n_0a_d2++;
                else if (s == 1) run.counts.n_a0_d2++;
                else if (s == 2) run.counts.n_00_d2++;
                else run.counts.n_aa_d2++;
            }
            run.log.push_back(rec);
        }
    } else {
        // Aggregate mode: exact binomial per (state, outcome) cell, one
        // deterministic substream per state.
        for (int s = 0; s < 4; ++s) {
            Xoshiro256 rng = Xoshiro256::substream(seed, 1 + s);
            std::uint64_t remaining = BinomialSampler::sample(rng, rounds, m.p_state[s]);
            double ptail = 1.0;
            std::array<std::uint64_t, 6> cell{};
            for (int o = 0; o < 6 && remaining > 0; ++o) {
                const double po = m.per_state[s].p[o];
                if (ptail <= 0) break;
                std::uint64_t c = o == 5 ? remaining
                                         : BinomialSampler::sample(
                                               rng, remaining,
                                               std::clamp(po / ptail, 0.0, 1.0));
                cell[o] = c;
                remaining -= c;
                ptail -= po;
            }
            const std::uint64_t zclicks = cell[1] + cell[2];
            if (s == 0) {
                run.counts.n_z += zclicks;
                errs += cell[1]; // early click on bit-0 state
                run.counts.n_0a_d1 += cell[3];
                run.counts.n_0a_d2 += cell[4];
            } else if (s == 1) {
                run.counts.n_z += zclicks;
                errs += cell[2];
                run.counts.n_a0_d1 += cell[3];
                run.counts.n_a0_d2 += cell[4];
            } else if (s == 2) {
                run.counts.n_00_d0 += zclicks;
                run.counts.n_00_d1 += cell[3];
                run.counts.n_00_d2 += cell[4];
            } else {
                run.counts.n_aa_d1 += cell[3];
                run.counts.n_aa_d2 += cell[4];
            }
        }
    }
    run.counts.E_z = run.counts.n_z ? errs / static_cast<double>(run.counts.n_z) : 0.0;
    return run;
}

// ---------------------------------------------------------------------------
// RoundLog binary format
// ---------------------------------------------------------------------------
// 16-byte fixed records, little-endian. Header: magic "CQRL", u16 version,
// u16 reserved, u64 record count. Record: u64 round, u8 state, u8 outcome,
// u8 slot, u8 bob_bit, u32 reserved.

namespace detail {
inline void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i) & 0xff));
}
inline std::uint64_t get_u64_le(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}
} // namespace detail

inline void store_round_log(const std::vector<RoundRecord>& log, const std::string& path) {
    std::string buf;
    buf.reserve(16 + 16 * log.size());
    buf += "CQRL";
    buf.push_back(1); buf.push_back(0); // version 1
    buf.push_back(0); buf.push_back(0); // reserved
    detail::put_u64_le(buf, log.size());
    for (const auto& r : log) {
        detail::put_u64_le(buf, r.round);
        buf.push_back(static_cast<char>(r.alice_state));
        buf.push_back(static_cast<char>(r.outcome));
        buf.push_back(static_cast<char>(r.slot));
        buf.push_back(static_cast<char>(r.bob_bit));
        buf.append(4, '\0');
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("store_round_log: cannot open " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline std::vector<RoundRecord> load_round_log(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_round_log: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 16 || buf.compare(0, 4, "CQRL") != 0)
        throw std::runtime_error("load_round_log: bad header");
    const std::uint64_t count = detail::get_u64_le(buf.data() + 8);
    if (buf.size() != 16 + 16 * count)
        throw std::runtime_error("load_round_log: truncated file");
    std::vector<RoundRecord> log(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const char* p = buf.data() + 16 + 16 * i;
        log[i].round = detail::get_u64_le(p);
        log[i].alice_state = static_cast<std::uint8_t>(p[8]);
        log[i].outcome = static_cast<std::uint8_t>(p[9]);
        log[i].slot = static_cast<std::uint8_t>(p[10]);
        log[i].bob_bit = static_cast<std::uint8_t>(p[11]);
    }
    return log;
}

} // namespace cowqkd::channel
