#pragma once

// Little-endian byte-level encoding used by the container formats. Files are
// assembled in memory and written in one shot, so round trips are bit-exact
// and independent of host endianness.

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "tednet/tensor.hpp"

namespace tednet::binio {

inline void put_u8(std::vector<std::uint8_t>& b, std::uint8_t v) { b.push_back(v); }

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& b, float v) {
    put_u32(b, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64(std::vector<std::uint8_t>& b, double v) {
    put_u64(b, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : p_(data), n_(size) {}
    explicit Reader(const std::vector<std::uint8_t>& buf) : Reader(buf.data(), buf.size()) {}

    std::size_t offset() const { return off_; }
    std::size_t remaining() const { return n_ - off_; }

    void need(std::size_t k) const {
        if (off_ + k > n_)
            throw FormatError("truncated file: need " + std::to_string(k) + " bytes at offset " +
                              std::to_string(off_) + ", only " + std::to_string(n_ - off_) +
                              " of " + std::to_string(n_) + " remain");
    }

    std::uint8_t u8() {
        need(1);
        return p_[off_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p_[off_]) |
                          static_cast<std::uint16_t>(p_[off_ + 1]) << 8;
        off_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[off_ + i]) << (8 * i);
        off_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[off_ + i]) << (8 * i);
        off_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(std::size_t k) {
        need(k);
        std::string s(reinterpret_cast<const char*>(p_ + off_), k);
        off_ += k;
        return s;
    }

    void skip(std::size_t k) {
        need(k);
        off_ += k;
    }

private:
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t off_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace tednet::binio
