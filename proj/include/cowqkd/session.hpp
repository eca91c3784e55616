#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include "cowqkd/bitvec.hpp"
#include "cowqkd/cascade.hpp"
#include "cowqkd/channel.hpp"
#include "cowqkd/core.hpp"
#include "cowqkd/finitekey.hpp"
#include "cowqkd/rng.hpp"
#include "cowqkd/toeplitz.hpp"
#include "cowqkd/transport.hpp"
#include "cowqkd/wire.hpp"

namespace cowqkd::session {

enum class Role : std::uint8_t { alice = 0, bob = 1 };

enum class Phase : std::uint8_t {
    hello, sift, estimate, cascade, verify, pa, confirm, otp, done, aborted
};

enum class AbortReason : std::uint8_t {
    none = 0,
    version_mismatch = 1,
    negotiation_mismatch = 2,
    framing_error = 3,
    timeout = 4,
    verify_mismatch = 5,
    confirm_mismatch = 6,
    insufficient_key = 7,
    protocol_error = 8,
    io_error = 9,
    peer_abort = 10,
};

inline const char* to_string(AbortReason r) {
    switch (r) {
        case AbortReason::none: return "none";
        case AbortReason::version_mismatch: return "version_mismatch";
        case AbortReason::negotiation_mismatch: return "negotiation_mismatch";
        case AbortReason::framing_error: return "framing_error";
        case AbortReason::timeout: return "timeout";
        case AbortReason::verify_mismatch: return "verify_mismatch";
        case AbortReason::confirm_mismatch: return "confirm_mismatch";
        case AbortReason::insufficient_key: return "insufficient_key";
        case AbortReason::protocol_error: return "protocol_error";
        case AbortReason::io_error: return "io_error";
        case AbortReason::peer_abort: return "peer_abort";
    }
    return "?";
}

// Secure mode derives the output length from the finite-key bound; demo mode
// retains reconciled-minus-disclosed bits and is NOT information-theoretically
// secure (flagged in the report), but exercises the full pipeline at desk
// scale.
enum class KeyPolicy : std::uint8_t { finite_key = 0, demo = 1 };

// Classical-channel authentication hook. The default no-op is the standard
// pre-shared-authenticated-channel assumption; sessions using it carry a
// loud warning in the report.
class ChannelAuth {
public:
    virtual ~ChannelAuth() = default;
    virtual bool is_noop() const { return true; }
};

struct SessionConfig {
    Role role = Role::alice;
    ProtocolParams protocol;
    channel::ChannelParams channel_params;
    SecurityParams security;
    std::uint64_t n_pulses = 10'000'000;
    std::uint64_t channel_seed = 1;
    std::uint64_t protocol_seed = 99; // drives shuffle/hash/PA seed generation
    KeyPolicy key_policy = KeyPolicy::demo;
    fk::PipelineOptions pipeline; // leak fields ignored: sessions measure leakage
    cascade::CascadeConfig cascade_cfg;
    double estimate_fraction = 0.01;
    std::chrono::milliseconds timeout{30'000};
    std::string otp_send_path; // alice: file to encrypt and transfer
    std::string otp_recv_path; // bob: where the decrypted file goes
    std::shared_ptr<ChannelAuth> auth; // null -> no-op with warning

    std::uint64_t config_hash() const {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "mu=%.17g pz=%.17g p0=%.17g paa=%.17g zs=%.17g rep=%.17g "
                      "d=%.17g at=%.17g N=%llu seed=%llu pol=%d K=%.17g r=%d sch=%d "
                      "ef=%.17g form=%d a20=%d ref=%d",
                      protocol.mu, protocol.p_z, protocol.p_0, protocol.p_alpha_alpha,
                      protocol.z_split, protocol.repetition_hz, channel_params.distance_km,
                      channel_params.atten_db_per_km,
                      static_cast<unsigned long long>(n_pulses),
                      static_cast<unsigned long long>(channel_seed),
                      static_cast<int>(key_policy), cascade_cfg.K, cascade_cfg.rounds,
                      static_cast<int>(cascade_cfg.schedule), estimate_fraction,
                      static_cast<int>(pipeline.form), static_cast<int>(pipeline.a20_scale),
                      pipeline.refined ? 1 : 0);
        return wire::fnv1a(std::string(buf));
    }
};

struct TranscriptEntry {
    bool sent;
    std::uint8_t type;
    std::uint32_t payload_len;
};

struct SessionReport {
    bool success = false;
    AbortReason abort_reason = AbortReason::none;
    std::string abort_message;
    Phase phase_reached = Phase::hello;
    BitVec final_key;
    std::uint64_t l = 0;
    std::uint64_t n_sifted = 0;
    std::uint64_t n_corrected = 0; // key length entering PA
    double e_estimate = 0.0;
    // sample bits + parity bits + the two 64-bit tag pads
    std::uint64_t disclosed_bits = 0;
    std::uint64_t disclosed_parity_bits = 0;
    std::uint64_t disclosed_sample_bits = 0;
    std::vector<TranscriptEntry> transcript;
    std::uint64_t transcript_hash = 0xcbf29ce484222325ULL;
    std::vector<std::string> warnings;
    channel::CountsRecord counts;             // populated on the alice side
    std::optional<fk::KeyLengthReport> fk_report; // finite-key mode, alice side
    bool otp_transferred = false;
};

// ---------------------------------------------------------------------------
// One-time pad
// ---------------------------------------------------------------------------

// XOR pad over a key bit string; consumed ranges are tracked and can never be
// reused. Bits pack into bytes MSB-first, matching the wire convention.
class OtpPad {
public:
    explicit OtpPad(BitVec key) : key_(std::move(key)) {}

    std::uint64_t size_bits() const { return key_.size(); }
    std::uint64_t next_free() const { return cursor_; }

    struct Blob {
        std::uint64_t bit_offset;
        std::vector<std::uint8_t> data;
    };

    Blob encrypt(const std::vector<std::uint8_t>& plain) {
        Blob b = xor_at(cursor_, plain);
        return b;
    }

    Blob encrypt_at(std::uint64_t bit_offset, const std::vector<std::uint8_t>& plain) {
        return xor_at(bit_offset, plain);
    }

    std::vector<std::uint8_t> decrypt(std::uint64_t bit_offset,
                                      const std::vector<std::uint8_t>& cipher) {
        return xor_at(bit_offset, cipher).data;
    }

private:
    Blob xor_at(std::uint64_t off, const std::vector<std::uint8_t>& data) {
        const std::uint64_t nbits = 8ull * data.size();
        if (off + nbits > key_.size())
            throw std::runtime_error("otp: insufficient key material");
        for (const auto& [b, e] : consumed_)
            if (off < e && b < off + nbits)
                throw std::runtime_error("otp: key range already consumed");
        Blob out;
        out.bit_offset = off;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::uint8_t k = 0;
            for (int j = 0; j < 8; ++j)
                k |= static_cast<std::uint8_t>(key_[off + 8 * i + j]) << (7 - j);
            out.data[i] = data[i] ^ k;
        }
        consumed_.emplace_back(off, off + nbits);
        cursor_ = std::max(cursor_, off + nbits);
        return out;
    }

    BitVec key_;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> consumed_;
    std::uint64_t cursor_ = 0;
};

inline std::vector<std::uint8_t> otp_encrypt(OtpPad& pad, const std::vector<std::uint8_t>& plain) {
    return pad.encrypt(plain).data;
}
inline std::vector<std::uint8_t> otp_decrypt(OtpPad& pad, std::uint64_t bit_offset,
                                             const std::vector<std::uint8_t>& cipher) {
    return pad.decrypt(bit_offset, cipher);
}

// ---------------------------------------------------------------------------
// Session engine
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kTagBits = 64;

namespace detail {

class Endpoint {
public:
    Endpoint(wire::ByteStream& stream, const SessionConfig& cfg)
        : stream_(stream), cfg_(cfg), rng_(cfg.protocol_seed ^ 0x5851f42d4c957f2dULL) {}

    SessionReport run() {
        try {
            run_inner();
        } catch (const AbortError& e) {
            report_.success = false;
            report_.abort_reason = e.reason;
            report_.abort_message = e.message;
            report_.phase_reached = Phase::aborted;
            report_.final_key = BitVec();
            report_.l = 0;
            if (e.announce) send_abort(e.reason, e.message);
        } catch (const std::exception& e) {
            report_.success = false;
            report_.abort_reason = AbortReason::io_error;
            report_.abort_message = e.what();
            report_.phase_reached = Phase::aborted;
            report_.final_key = BitVec();
            report_.l = 0;
            send_abort(AbortReason::io_error, "internal error");
        }
        return std::move(report_);
    }

private:
    struct AbortError {
        AbortReason reason;
        std::string message;
        bool announce; // false when the peer already aborted
    };

    [[noreturn]] void fail(AbortReason r, const std::string& msg, bool announce = true) {
        throw AbortError{r, msg, announce};
    }

    // Add-one upper-biased rate so a clean sample still sizes blocks sanely.
    static double robust_rate(std::uint64_t mismatches, std::uint64_t count) {
        return std::min(0.49, static_cast<double>(mismatches + 1) /
                                  static_cast<double>(count + 1));
    }

    void send_abort(AbortReason r, const std::string& msg) {
        try {
            wire::PayloadWriter w;
            w.u8(static_cast<std::uint8_t>(r));
            w.u16(static_cast<std::uint16_t>(std::min<std::size_t>(msg.size(), 0xffff)));
            w.bytes(reinterpret_cast<const std::uint8_t*>(msg.data()),
                    std::min<std::size_t>(msg.size(), 0xffff));
            send(wire::Tag::abort, w.take());
        } catch (...) {
            // peer already gone
        }
    }

    void send(wire::Tag t, const std::vector<std::uint8_t>& payload) {
        auto bytes = wire::encode_frame(t, payload);
        stream_.write_all(bytes.data(), bytes.size());
        note_frame(true, static_cast<std::uint8_t>(t), payload.size(), bytes);
    }

    wire::WireFrame recv(std::initializer_list<wire::Tag> expected) {
        auto r = wire::read_frame(stream_, cfg_.timeout);
        if (!r.ok) fail(AbortReason::timeout, r.error);
        auto bytes = wire::encode_frame(r.frame.type, r.frame.payload);
        note_frame(false, static_cast<std::uint8_t>(r.frame.type), r.frame.payload.size(),
                   bytes);
        if (r.frame.type == wire::Tag::abort) {
            wire::PayloadReader rd(r.frame.payload);
            AbortReason why = AbortReason::protocol_error;
            std::string msg;
            try {
                why = static_cast<AbortReason>(rd.u8());
                const std::uint16_t len = rd.u16();
                auto rest = rd.rest();
                msg.assign(rest.begin(), rest.begin() + std::min<std::size_t>(len, rest.size()));
            } catch (...) {
            }
            fail(AbortReason::peer_abort,
                 std::string("peer abort: ") + to_string(why) + " " + msg, false);
        }
        for (auto t : expected)
            if (r.frame.type == t) return std::move(r.frame);
        fail(AbortReason::protocol_error,
             "unexpected frame type " + std::to_string(static_cast<int>(r.frame.type)));
    }

    void note_frame(bool sent, std::uint8_t type, std::size_t len,
                    const std::vector<std::uint8_t>& bytes) {
        report_.transcript.push_back({sent, type, static_cast<std::uint32_t>(len)});
        const std::uint8_t dir = sent ? 0xA5 : 0x5A;
        report_.transcript_hash = wire::fnv1a(&dir, 1, report_.transcript_hash);
        report_.transcript_hash = wire::fnv1a(bytes.data(), bytes.size(), report_.transcript_hash);
    }

    // ---- phases ----

    void run_inner() {
        if (!cfg_.auth || cfg_.auth->is_noop())
            report_.warnings.push_back("channel authentication: none (trusted channel assumed)");
        hello_phase();
        sift_phase();
        estimate_phase();
        cascade_phase();
        verify_phase();
        pa_phase();
        confirm_phase();
        otp_phase();
        report_.phase_reached = Phase::done;
        report_.success = true;
    }

    void hello_phase() {
        report_.phase_reached = Phase::hello;
        wire::PayloadWriter w;
        w.u16(kProtocolVersion);
        w.u8(static_cast<std::uint8_t>(cfg_.role));
        w.u64(cfg_.config_hash());
        w.u64(cfg_.channel_seed);
        w.u64(cfg_.n_pulses);
        w.u8(static_cast<std::uint8_t>(cfg_.key_policy));
        w.u8(cfg_.otp_send_path.empty() ? 0 : 1);
        const bool alice = cfg_.role == Role::alice;
        if (alice) send(wire::Tag::hello, w.take());
        auto f = recv({wire::Tag::hello});
        if (!alice) send(wire::Tag::hello, w.take());
        wire::PayloadReader rd(f.payload);
        const std::uint16_t version = rd.u16();
        const auto peer_role = static_cast<Role>(rd.u8());
        const std::uint64_t peer_cfg = rd.u64();
        const std::uint64_t peer_seed = rd.u64();
        const std::uint64_t peer_pulses = rd.u64();
        const auto peer_policy = static_cast<KeyPolicy>(rd.u8());
        otp_expected_ = rd.u8() != 0 || !cfg_.otp_send_path.empty();
        if (version != kProtocolVersion)
            fail(AbortReason::version_mismatch, "peer version " + std::to_string(version));
        if (peer_role == cfg_.role)
            fail(AbortReason::negotiation_mismatch, "both endpoints claim the same role");
        if (peer_cfg != cfg_.config_hash() || peer_seed != cfg_.channel_seed ||
            peer_pulses != cfg_.n_pulses || peer_policy != cfg_.key_policy)
            fail(AbortReason::negotiation_mismatch, "session parameters differ");
    }

    void sift_phase() {
        report_.phase_reached = Phase::sift;
        sim_ = channel::sample_run(cfg_.channel_params, cfg_.protocol, cfg_.n_pulses,
                                   cfg_.channel_seed, true);
        using channel::detail::Outcome;
        const bool alice = cfg_.role == Role::alice;

        if (!alice) {
            // announce every single-click detection: kind 0 = Z, 1 = D1, 2 = D2
            wire::PayloadWriter w;
            std::uint32_t count = 0;
            for (const auto& rec : sim_.log) {
                const auto oc = static_cast<Outcome>(rec.outcome);
                if (oc == Outcome::z_early || oc == Outcome::z_late ||
                    oc == Outcome::x_d1 || oc == Outcome::x_d2)
                    ++count;
            }
            w.u32(count);
            for (const auto& rec : sim_.log) {
                const auto oc = static_cast<Outcome>(rec.outcome);
                std::uint8_t kind;
                if (oc == Outcome::z_early || oc == Outcome::z_late) kind = 0;
                else if (oc == Outcome::x_d1) kind = 1;
                else if (oc == Outcome::x_d2) kind = 2;
                else continue;
                w.u64(rec.round);
                w.u8(kind);
            }
            send(wire::Tag::detections, w.take());

            auto f = recv({wire::Tag::detections});
            wire::PayloadReader rd(f.payload);
            const std::uint32_t kept = rd.u32();
            std::map<std::uint64_t, std::uint8_t> my_bits;
            for (const auto& rec : sim_.log) {
                const auto oc = static_cast<Outcome>(rec.outcome);
                if (oc == Outcome::z_early || oc == Outcome::z_late)
                    my_bits[rec.round] = rec.bob_bit;
            }
            for (std::uint32_t i = 0; i < kept; ++i) {
                const std::uint64_t round = rd.u64();
                auto it = my_bits.find(round);
                if (it == my_bits.end())
                    fail(AbortReason::protocol_error, "peer kept an unannounced round");
                key_.push_back(it->second == 1);
            }
        } else {
            auto f = recv({wire::Tag::detections});
            wire::PayloadReader rd(f.payload);
            const std::uint32_t count = rd.u32();
            // her state per round, from the shared-seed simulation log
            std::map<std::uint64_t, std::uint8_t> state_of;
            for (const auto& rec : sim_.log) state_of[rec.round] = rec.alice_state;

            auto& c = report_.counts;
            c.N = cfg_.n_pulses;
            c.mu = cfg_.protocol.mu;
            c.P_00 = cfg_.protocol.p_0;
            c.P_aa = cfg_.protocol.p_alpha_alpha;
            std::vector<std::uint64_t> kept;
            for (std::uint32_t i = 0; i < count; ++i) {
                const std::uint64_t round = rd.u64();
                const std::uint8_t kind = rd.u8();
                auto it = state_of.find(round);
                if (it == state_of.end())
                    fail(AbortReason::protocol_error, "peer announced an empty round");
                const std::uint8_t s = it->second;
                if (kind == 0) {
                    if (s <= 1) {
                        c.n_z++;
                        kept.push_back(round);
                        key_.push_back(s == 1);
                    } else if (s == 2) {
                        c.n_00_d0++;
                    }
                } else if (kind == 1) {
                    if (s == 0) c.n_0a_d1++;
                    else if (s == 1) c.n_a0_d1++;
                    else if (s == 2) c.n_00_d1++;
                    else c.n_aa_d1++;
                } else if (kind == 2) {
                    if (s == 0) c.n_0a_d2++;
                    else if (s == 1) c.n_a0_d2++;
                    else if (s == 2) c.n_00_d2++;
                    else c.n_aa_d2++;
                } else {
                    fail(AbortReason::protocol_error, "bad detection kind");
                }
            }
            wire::PayloadWriter w;
            w.u32(static_cast<std::uint32_t>(kept.size()));
            for (auto r2 : kept) w.u64(r2);
            send(wire::Tag::detections, w.take());
        }
        report_.n_sifted = key_.size();
        if (key_.empty()) fail(AbortReason::insufficient_key, "no sifted detections");
    }

    void estimate_phase() {
        report_.phase_reached = Phase::estimate;
        const bool alice = cfg_.role == Role::alice;
        std::vector<std::uint32_t> positions;
        if (!alice) {
            const std::size_t n = key_.size();
            // keep the sample informative even for short keys
            std::size_t sample = std::max<std::size_t>(
                32, static_cast<std::size_t>(static_cast<double>(n) * cfg_.estimate_fraction));
            sample = std::min(sample, n / 2 ? n / 2 : 1);
            Xoshiro256 srng(cfg_.channel_seed ^ 0x3c6ef372fe94f82bULL);
            std::vector<std::uint8_t> chosen(n, 0);
            while (positions.size() < sample) {
                const auto p = static_cast<std::uint32_t>(srng.below(n));
                if (!chosen[p]) {
                    chosen[p] = 1;
                    positions.push_back(p);
                }
            }
            std::sort(positions.begin(), positions.end());
            wire::PayloadWriter w;
            w.u32(static_cast<std::uint32_t>(positions.size()));
            for (auto p : positions) w.u32(p);
            BitVec bits(positions.size());
            for (std::size_t i = 0; i < positions.size(); ++i) bits.set(i, key_[positions[i]]);
            w.bits(bits);
            send(wire::Tag::estimate, w.take());
            auto f = recv({wire::Tag::estimate});
            wire::PayloadReader rd(f.payload);
            const std::uint32_t mismatches = rd.u32();
            report_.e_estimate =
                static_cast<double>(mismatches) / static_cast<double>(positions.size());
            e_for_cascade_ = robust_rate(mismatches, positions.size());
            report_.disclosed_sample_bits = positions.size();
        } else {
            auto f = recv({wire::Tag::estimate});
            wire::PayloadReader rd(f.payload);
            const std::uint32_t count = rd.u32();
            positions.reserve(count);
            for (std::uint32_t i = 0; i < count; ++i) {
                const std::uint32_t p = rd.u32();
                if (p >= key_.size()) fail(AbortReason::protocol_error, "sample position range");
                positions.push_back(p);
            }
            BitVec bits = rd.bits();
            if (bits.size() != count) fail(AbortReason::protocol_error, "sample size mismatch");
            std::uint32_t mismatches = 0;
            for (std::uint32_t i = 0; i < count; ++i)
                if (key_[positions[i]] != bits[i]) ++mismatches;
            wire::PayloadWriter w;
            w.u32(mismatches);
            send(wire::Tag::estimate, w.take());
            report_.e_estimate = static_cast<double>(mismatches) / count;
            e_for_cascade_ = robust_rate(mismatches, count);
            report_.disclosed_sample_bits = count;
        }
        // sampled bits are public now; drop them on both sides
        BitVec pruned;
        std::size_t next = 0;
        for (std::size_t i = 0; i < key_.size(); ++i) {
            if (next < positions.size() && positions[next] == i) {
                ++next;
                continue;
            }
            pruned.push_back(key_[i]);
        }
        key_ = std::move(pruned);
        report_.disclosed_bits += report_.disclosed_sample_bits;
        if (key_.size() < 8) fail(AbortReason::insufficient_key, "sifted key too short");
    }

    class WireOracle : public cascade::ParityOracle {
    public:
        explicit WireOracle(Endpoint& ep) : ep_(ep) {}
        std::vector<std::uint8_t> parities(const std::vector<cascade::BlockRef>& blocks) override {
            wire::PayloadWriter w;
            w.u32(static_cast<std::uint32_t>(blocks.size()));
            for (const auto& b : blocks) {
                w.u32(b.round);
                w.u64(b.begin);
                w.u64(b.end);
            }
            ep_.send(wire::Tag::parity_req, w.take());
            auto f = ep_.recv({wire::Tag::parity_resp});
            wire::PayloadReader rd(f.payload);
            BitVec bits = rd.bits();
            if (bits.size() != blocks.size())
                ep_.fail(AbortReason::protocol_error, "parity response size mismatch");
            ep_.report_.disclosed_parity_bits += bits.size();
            std::vector<std::uint8_t> out(bits.size());
            for (std::size_t i = 0; i < bits.size(); ++i) out[i] = bits[i];
            return out;
        }

    private:
        Endpoint& ep_;
    };

    void cascade_phase() {
        report_.phase_reached = Phase::cascade;
        const bool alice = cfg_.role == Role::alice;
        cascade::CascadeConfig cfg = cfg_.cascade_cfg;
        if (alice) {
            // pick per-round shuffle seeds and announce them
            cfg.shuffle_seeds.clear();
            for (int r = 0; r < cfg.rounds; ++r) cfg.shuffle_seeds.push_back(rng_.next());
            wire::PayloadWriter w;
            w.u32(static_cast<std::uint32_t>(cfg.shuffle_seeds.size()));
            for (auto s : cfg.shuffle_seeds) w.u64(s);
            send(wire::Tag::shuffle_seed, w.take());

            cascade::LocalParityOracle oracle(key_, cfg);
            for (;;) {
                auto f = recv({wire::Tag::parity_req, wire::Tag::verify});
                if (f.type == wire::Tag::verify) {
                    pending_verify_ = std::move(f);
                    break;
                }
                wire::PayloadReader rd(f.payload);
                const std::uint32_t count = rd.u32();
                std::vector<cascade::BlockRef> blocks;
                blocks.reserve(count);
                for (std::uint32_t i = 0; i < count; ++i) {
                    cascade::BlockRef b{rd.u32(), rd.u64(), rd.u64()};
                    if (b.begin >= b.end || b.end > key_.size() ||
                        b.round >= static_cast<std::uint32_t>(cfg.rounds))
                        fail(AbortReason::protocol_error, "parity request range");
                    blocks.push_back(b);
                }
                auto par = oracle.parities(blocks);
                BitVec bits(par.size());
                for (std::size_t i = 0; i < par.size(); ++i) bits.set(i, par[i]);
                wire::PayloadWriter w2;
                w2.bits(bits);
                send(wire::Tag::parity_resp, w2.take());
                report_.disclosed_parity_bits += par.size();
            }
        } else {
            auto f = recv({wire::Tag::shuffle_seed});
            wire::PayloadReader rd(f.payload);
            const std::uint32_t count = rd.u32();
            cfg.shuffle_seeds.clear();
            for (std::uint32_t i = 0; i < count; ++i) cfg.shuffle_seeds.push_back(rd.u64());
            if (cfg.shuffle_seeds.size() != static_cast<std::size_t>(cfg.rounds))
                fail(AbortReason::protocol_error, "shuffle seed count");
            WireOracle oracle(*this);
            auto res = cascade::reconcile(key_, oracle, cfg, e_for_cascade_);
            key_ = std::move(res.corrected_key);
        }
        report_.disclosed_bits += report_.disclosed_parity_bits;
    }

    void verify_phase() {
        report_.phase_reached = Phase::verify;
        const bool alice = cfg_.role == Role::alice;
        if (key_.size() < kTagBits + 1)
            fail(AbortReason::insufficient_key, "key too short for verification");
        const std::size_t body_len = key_.size() - kTagBits;
        BitVec body = key_.slice(0, body_len);
        std::uint64_t pad = 0;
        for (std::size_t i = 0; i < kTagBits; ++i)
            pad |= static_cast<std::uint64_t>(key_[body_len + i]) << i;

        if (!alice) {
            const std::uint64_t seed = rng_.next();
            const std::uint64_t masked = pa::toeplitz_tag64(body, seed) ^ pad;
            wire::PayloadWriter w;
            w.u64(seed);
            w.u64(masked);
            send(wire::Tag::verify, w.take());
            auto f = recv({wire::Tag::verify});
            wire::PayloadReader rd(f.payload);
            const std::uint64_t peer_seed = rd.u64();
            const std::uint64_t peer_masked = rd.u64();
            if (peer_seed != seed || peer_masked != masked)
                fail(AbortReason::verify_mismatch, "correction verification failed");
        } else {
            auto f = pending_verify_ ? std::move(*pending_verify_)
                                     : recv({wire::Tag::verify});
            pending_verify_.reset();
            wire::PayloadReader rd(f.payload);
            const std::uint64_t seed = rd.u64();
            const std::uint64_t peer_masked = rd.u64();
            const std::uint64_t masked = pa::toeplitz_tag64(body, seed) ^ pad;
            if (peer_masked != masked)
                fail(AbortReason::verify_mismatch, "correction verification failed");
            wire::PayloadWriter w;
            w.u64(seed);
            w.u64(masked);
            send(wire::Tag::verify, w.take());
        }
        // the pad bits are consumed
        key_ = std::move(body);
        report_.n_corrected = key_.size();
        report_.disclosed_bits += kTagBits;
    }

    void pa_phase() {
        report_.phase_reached = Phase::pa;
        const bool alice = cfg_.role == Role::alice;
        const std::uint64_t n = key_.size();
        std::uint64_t m = 0;
        pa::ToeplitzSpec spec;
        if (alice) {
            std::uint64_t l = 0;
            if (cfg_.key_policy == KeyPolicy::demo) {
                const std::int64_t avail =
                    static_cast<std::int64_t>(n) -
                    static_cast<std::int64_t>(report_.disclosed_parity_bits) -
                    static_cast<std::int64_t>(kTagBits);
                l = avail > 0 ? static_cast<std::uint64_t>(avail) : 0;
                report_.warnings.push_back(
                    "demo key policy: output length is not an information-theoretic bound");
            } else {
                auto counts = report_.counts;
                counts.n_z = n; // post-sampling, post-verification accounting
                counts.E_z = report_.e_estimate;
                fk::PipelineOptions opt = cfg_.pipeline;
                opt.leak_mode = fk::LeakMode::measured;
                opt.leak_bits = static_cast<double>(report_.disclosed_parity_bits);
                opt.repetition_hz = cfg_.protocol.repetition_hz;
                auto rep = fk::evaluate_pipeline(counts, cfg_.security, opt);
                report_.fk_report = rep;
                l = std::min<std::uint64_t>(rep.l, n > kTagBits ? n - kTagBits : 0);
            }
            m = l ? l + kTagBits : 0;
            wire::PayloadWriter w;
            w.u64(m);
            if (m) {
                spec = pa::ToeplitzSpec::random(n, m, rng_);
                w.bits(spec.seed);
            }
            send(wire::Tag::pa_seed, w.take());
        } else {
            auto f = recv({wire::Tag::pa_seed});
            wire::PayloadReader rd(f.payload);
            m = rd.u64();
            if (m > n) fail(AbortReason::protocol_error, "pa output exceeds key");
            if (m) {
                spec.n = n;
                spec.m = m;
                spec.seed = rd.bits();
                if (spec.seed.size() != m + n - 1)
                    fail(AbortReason::protocol_error, "pa seed length");
            }
        }
        if (m) {
            BitVec out = pa::toeplitz_fft(spec, key_);
            report_.final_key = out.slice(0, m - kTagBits);
            confirm_pad_ = 0;
            for (std::size_t i = 0; i < kTagBits; ++i)
                confirm_pad_ |= static_cast<std::uint64_t>(out[m - kTagBits + i]) << i;
        } else {
            report_.final_key = BitVec();
            confirm_pad_ = 0;
        }
        report_.l = report_.final_key.size();
    }

    void confirm_phase() {
        report_.phase_reached = Phase::confirm;
        const bool alice = cfg_.role == Role::alice;
        const std::uint64_t seed_base = alice ? rng_.next() : 0;
        const auto tag_of = [&](std::uint64_t seed) {
            return report_.final_key.size()
                       ? (pa::toeplitz_tag64(report_.final_key, seed) ^ confirm_pad_)
                       : 0;
        };
        if (alice) {
            wire::PayloadWriter w;
            w.u64(seed_base);
            w.u64(tag_of(seed_base));
            send(wire::Tag::confirm, w.take());
            auto f = recv({wire::Tag::confirm});
            wire::PayloadReader rd(f.payload);
            const std::uint64_t peer_seed = rd.u64();
            const std::uint64_t peer_tag = rd.u64();
            if (peer_seed != seed_base || peer_tag != tag_of(seed_base))
                fail(AbortReason::confirm_mismatch, "final key confirmation failed");
        } else {
            auto f = recv({wire::Tag::confirm});
            wire::PayloadReader rd(f.payload);
            const std::uint64_t seed = rd.u64();
            const std::uint64_t peer_tag = rd.u64();
            if (peer_tag != tag_of(seed))
                fail(AbortReason::confirm_mismatch, "final key confirmation failed");
            wire::PayloadWriter w;
            w.u64(seed);
            w.u64(tag_of(seed));
            send(wire::Tag::confirm, w.take());
        }
        report_.disclosed_bits += kTagBits;
    }

    void otp_phase() {
        if (!otp_expected_) return;
        report_.phase_reached = Phase::otp;
        const bool alice = cfg_.role == Role::alice;
        if (alice && !cfg_.otp_send_path.empty()) {
            std::vector<std::uint8_t> plain = read_file(cfg_.otp_send_path);
            if (8ull * plain.size() > report_.final_key.size())
                fail(AbortReason::insufficient_key, "file exceeds one-time-pad material");
            OtpPad pad(report_.final_key);
            auto blob = pad.encrypt(plain);
            wire::PayloadWriter w;
            w.u64(blob.bit_offset);
            w.u64(blob.data.size());
            w.bytes(blob.data.data(), blob.data.size());
            send(wire::Tag::otp_blob, w.take());
            report_.otp_transferred = true;
        } else if (!alice) {
            auto f = recv({wire::Tag::otp_blob});
            wire::PayloadReader rd(f.payload);
            const std::uint64_t off = rd.u64();
            const std::uint64_t nbytes = rd.u64();
            auto cipher = rd.rest();
            if (cipher.size() != nbytes)
                fail(AbortReason::protocol_error, "otp blob size mismatch");
            if (off + 8 * nbytes > report_.final_key.size())
                fail(AbortReason::insufficient_key, "otp blob exceeds key");
            OtpPad pad(report_.final_key);
            auto plain = pad.decrypt(off, cipher);
            if (!cfg_.otp_recv_path.empty()) write_file_0600(cfg_.otp_recv_path, plain);
            report_.otp_transferred = true;
        }
    }

    static std::vector<std::uint8_t> read_file(const std::string& path) {
        std::FILE* f = std::fopen(path.c_str(), "rb");
        if (!f) throw std::runtime_error("cannot open " + path);
        std::vector<std::uint8_t> data;
        std::uint8_t buf[65536];
        std::size_t n;
        while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) data.insert(data.end(), buf, buf + n);
        std::fclose(f);
        return data;
    }

    static void write_file_0600(const std::string& path, const std::vector<std::uint8_t>& data);

    wire::ByteStream& stream_;
    const SessionConfig& cfg_;
    Xoshiro256 rng_;
    SessionReport report_;
    channel::SampleRun sim_;
    BitVec key_;
    std::optional<wire::WireFrame> pending_verify_;
    std::uint64_t confirm_pad_ = 0;
    double e_for_cascade_ = 0.0;
    bool otp_expected_ = false;

    friend class WireOracle;
};

inline void Endpoint::write_file_0600(const std::string& path,
                                      const std::vector<std::uint8_t>& data) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    if (fd < 0) throw std::runtime_error("cannot create " + path);
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t w = ::write(fd, data.data() + off, data.size() - off);
        if (w <= 0) {
            ::close(fd);
            throw std::runtime_error("write failed: " + path);
        }
        off += static_cast<std::size_t>(w);
    }
    ::close(fd);
}

} // namespace detail

inline SessionReport run_session(wire::ByteStream& stream, const SessionConfig& cfg) {
    detail::Endpoint ep(stream, cfg);
    return ep.run();
}

} // namespace cowqkd::session
