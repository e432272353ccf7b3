// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_COMMON_BINIO_HPP
#define TIP_COMMON_BINIO_HPP

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "tip/common/error.hpp"

namespace tip {

/// Little-endian append-only byte sink for the versioned wire formats.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { raw(&v, 2); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void bytes(const void* p, std::size_t n) { raw(p, n); }
    void magic(const char tag[4]) { raw(tag, 4); }

    const std::vector<std::uint8_t>& data() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    void raw(const void* p, std::size_t n) {
        // host is little-endian on every supported platform
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; throws MalformedFrame on underrun.
class ByteReader {
public:
    ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
    explicit ByteReader(const std::vector<std::uint8_t>& v)
        : ByteReader(v.data(), v.size()) {}

    std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
    std::uint16_t u16() { std::uint16_t v; raw(&v, 2); return v; }
    std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    double f64() { double v; raw(&v, 8); return v; }
    void bytes(void* out, std::size_t n) { raw(out, n); }

    void expect_magic(const char tag[4]) {
        char got[4];
        raw(got, 4);
        if (std::memcmp(got, tag, 4) != 0)
            fail(ErrorCode::MalformedFrame, "bad magic");
    }

    std::size_t remaining() const { return n_ - pos_; }
    bool done() const { return pos_ == n_; }

private:
    void raw(void* out, std::size_t n) {
        if (pos_ + n > n_)
            fail(ErrorCode::MalformedFrame, "truncated input");
        std::memcpy(out, p_ + pos_, n);
        pos_ += n;
    }
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& data);

}  // namespace tip

#endif  // TIP_COMMON_BINIO_HPP
