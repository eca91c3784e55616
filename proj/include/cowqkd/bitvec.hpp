#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cowqkd {

// Packed bit string. Word layout is little-endian within the vector
// (bit i lives in words_[i/64] at bit position i%64); the wire modules
// re-pack MSB-first when serializing.
class BitVec {
public:
    BitVec() = default;
    explicit BitVec(std::size_t n, bool value = false)
        : size_(n), words_((n + 63) / 64, value ? ~std::uint64_t{0} : 0) {
        trim();
    }

    static BitVec from_bools(const std::vector<std::uint8_t>& bits) {
        BitVec v(bits.size());
        for (std::size_t i = 0; i < bits.size(); ++i)
            if (bits[i]) v.set(i, true);
        return v;
    }

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    bool operator[](std::size_t i) const {
        return (words_[i >> 6] >> (i & 63)) & 1u;
    }
    void set(std::size_t i, bool b) {
        std::uint64_t mask = std::uint64_t{1} << (i & 63);
        if (b) words_[i >> 6] |= mask;
        else   words_[i >> 6] &= ~mask;
    }
    void flip(std::size_t i) { words_[i >> 6] ^= std::uint64_t{1} << (i & 63); }

    void push_back(bool b) {
        if ((size_ & 63) == 0) words_.push_back(0);
        if (b) words_.back() |= std::uint64_t{1} << (size_ & 63);
        ++size_;
    }

    void append(const BitVec& other) {
        for (std::size_t i = 0; i < other.size(); ++i) push_back(other[i]);
    }

    BitVec slice(std::size_t begin, std::size_t len) const {
        if (begin + len > size_) throw std::out_of_range("BitVec::slice");
        BitVec out(len);
        for (std::size_t i = 0; i < len; ++i) out.set(i, (*this)[begin + i]);
        return out;
    }

    // Parity of bits [begin, end).
    bool range_parity(std::size_t begin, std::size_t end) const {
        if (begin >= end) return false;
        std::size_t wb = begin >> 6, we = (end - 1) >> 6;
        std::uint64_t acc = 0;
        if (wb == we) {
            std::uint64_t m = mask_from(begin & 63) & mask_upto(((end - 1) & 63) + 1);
            acc = words_[wb] & m;
        } else {
            acc = words_[wb] & mask_from(begin & 63);
            for (std::size_t w = wb + 1; w < we; ++w) acc ^= words_[w];
            acc ^= words_[we] & mask_upto(((end - 1) & 63) + 1);
        }
        return std::popcount(acc) & 1u;
    }

    bool parity() const { return range_parity(0, size_); }

    BitVec operator^(const BitVec& rhs) const {
        if (size_ != rhs.size_) throw std::invalid_argument("BitVec xor: size mismatch");
        BitVec out = *this;
        for (std::size_t w = 0; w < words_.size(); ++w) out.words_[w] ^= rhs.words_[w];
        return out;
    }

    bool operator==(const BitVec& rhs) const {
        return size_ == rhs.size_ && words_ == rhs.words_;
    }
    bool operator!=(const BitVec& rhs) const { return !(*this == rhs); }

    std::size_t hamming_distance(const BitVec& rhs) const {
        if (size_ != rhs.size_) throw std::invalid_argument("BitVec distance: size mismatch");
        std::size_t d = 0;
        for (std::size_t w = 0; w < words_.size(); ++w)
            d += std::popcount(words_[w] ^ rhs.words_[w]);
        return d;
    }

    std::size_t count_ones() const {
        std::size_t c = 0;
        for (auto w : words_) c += std::popcount(w);
        return c;
    }

    const std::vector<std::uint64_t>& words() const { return words_; }

    std::string to_string() const {
        std::string s;
        s.reserve(size_);
        for (std::size_t i = 0; i < size_; ++i) s += (*this)[i] ? '1' : '0';
        return s;
    }

private:
    static std::uint64_t mask_from(unsigned b) { return ~std::uint64_t{0} << b; }
    static std::uint64_t mask_upto(unsigned b) {
        return b >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << b) - 1);
    }
    void trim() {
        if (size_ & 63) words_.back() &= mask_upto(size_ & 63);
    }

    std::size_t size_ = 0;
    std::vector<std::uint64_t> words_;
};

} // namespace cowqkd
