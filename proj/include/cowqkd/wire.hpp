#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cowqkd/bitvec.hpp"

namespace cowqkd::wire {

// Classical-channel message tags.
enum class Tag : std::uint8_t {
    hello = 0x01,
    detections = 0x02,
    estimate = 0x03,
    shuffle_seed = 0x04,
    parity_req = 0x05,
    parity_resp = 0x06,
    verify = 0x07,
    pa_seed = 0x08,
    confirm = 0x09,
    otp_blob = 0x0a,
    abort = 0x0f,
};

inline bool known_tag(std::uint8_t t) {
    switch (static_cast<Tag>(t)) {
        case Tag::hello:
        case Tag::detections:
        case Tag::estimate:
        case Tag::shuffle_seed:
        case Tag::parity_req:
        case Tag::parity_resp:
        case Tag::verify:
        case Tag::pa_seed:
        case Tag::confirm:
        case Tag::otp_blob:
        case Tag::abort:
            return true;
    }
    return false;
}

struct WireFrame {
    Tag type;
    std::vector<std::uint8_t> payload;
};

// Frame layout: u32 big-endian payload length, u8 tag, payload bytes.
inline std::vector<std::uint8_t> encode_frame(Tag type, const std::vector<std::uint8_t>& payload) {
    if (payload.size() > 0xffffffffull)
        throw std::invalid_argument("encode_frame: payload too large");
    std::vector<std::uint8_t> out;
    out.reserve(5 + payload.size());
    const std::uint32_t len = static_cast<std::uint32_t>(payload.size());
    out.push_back(static_cast<std::uint8_t>(len >> 24));
    out.push_back(static_cast<std::uint8_t>(len >> 16));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.push_back(static_cast<std::uint8_t>(len));
    out.push_back(static_cast<std::uint8_t>(type));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

// Decodes one complete frame from a byte buffer; throws on truncation,
// length overrun or unknown tag.
inline WireFrame decode_frame(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 5) throw std::invalid_argument("decode_frame: truncated header");
    const std::uint32_t len = (static_cast<std::uint32_t>(bytes[0]) << 24) |
                              (static_cast<std::uint32_t>(bytes[1]) << 16) |
                              (static_cast<std::uint32_t>(bytes[2]) << 8) |
                              static_cast<std::uint32_t>(bytes[3]);
    if (!known_tag(bytes[4])) throw std::invalid_argument("decode_frame: unknown tag");
    if (bytes.size() != 5ull + len)
        throw std::invalid_argument(bytes.size() < 5ull + len
                                        ? "decode_frame: truncated payload"
                                        : "decode_frame: length overrun");
    WireFrame f;
    f.type = static_cast<Tag>(bytes[4]);
    f.payload.assign(bytes.begin() + 5, bytes.end());
    return f;
}

// ---------------------------------------------------------------------------
// Payload primitives. Multi-byte integers big-endian; bitstrings MSB-first
// with a 32-bit bit-length prefix.
// ---------------------------------------------------------------------------

class PayloadWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
        buf_.push_back(static_cast<std::uint8_t>(v));
    }
    void u32(std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void u64(std::uint64_t v) {
        for (int s = 56; s >= 0; s -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void bytes(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
    void bits(const BitVec& v) {
        if (v.size() > 0xffffffffull) throw std::invalid_argument("bits: too long");
        u32(static_cast<std::uint32_t>(v.size()));
        std::uint8_t cur = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            cur |= static_cast<std::uint8_t>(v[i]) << (7 - (i & 7));
            if ((i & 7) == 7) {
                buf_.push_back(cur);
                cur = 0;
            }
        }
        if (v.size() & 7) buf_.push_back(cur);
    }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class PayloadReader {
public:
    explicit PayloadReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

    std::uint8_t u8() { return need(1), buf_[pos_++]; }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = (static_cast<std::uint16_t>(buf_[pos_]) << 8) | buf_[pos_ + 1];
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | buf_[pos_ + i];
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = v << 8 | buf_[pos_ + i];
        pos_ += 8;
        return v;
    }
    BitVec bits() {
        const std::uint32_t n = u32();
        const std::size_t nbytes = (n + 7) / 8;
        need(nbytes);
        BitVec v(n);
        for (std::uint32_t i = 0; i < n; ++i)
            v.set(i, buf_[pos_ + (i >> 3)] >> (7 - (i & 7)) & 1u);
        pos_ += nbytes;
        return v;
    }
    std::vector<std::uint8_t> rest() {
        std::vector<std::uint8_t> out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                      buf_.end());
        pos_ = buf_.size();
        return out;
    }
    bool done() const { return pos_ == buf_.size(); }
    void expect_done() const {
        if (!done()) throw std::invalid_argument("payload: trailing bytes");
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw std::invalid_argument("payload: truncated");
    }
    const std::vector<std::uint8_t>& buf_;
    std::size_t pos_ = 0;
};

// FNV-1a over frame bytes, used for transcript hashing and config digests.
inline std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
    return fnv1a(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

} // namespace cowqkd::wire
