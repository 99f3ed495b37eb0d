#pragma once

#include "sodip/common.hpp"

#include <cstring>

namespace sodip {

// Little-endian byte stream helpers. Doubles travel as raw IEEE-754 bit
// patterns so archives reload bit-exactly.

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        u64(bits);
    }
    void boolean(bool v) { u8(v ? 1 : 0); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void vec(const Vector& v) {
        u64(static_cast<std::uint64_t>(v.size()));
        for (Index i = 0; i < v.size(); ++i) f64(v[i]);
    }
    void mat(const Matrix& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        for (Index i = 0; i < m.rows(); ++i) {
            for (Index j = 0; j < m.cols(); ++j) f64(m(i, j));
        }
    }
    void raw(const std::string& bytes) { buf_.append(bytes); }

    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(const std::string& bytes) : buf_(bytes) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    bool boolean() { return u8() != 0; }
    std::string str() {
        const std::uint32_t len = u32();
        need(len);
        std::string s = buf_.substr(pos_, len);
        pos_ += len;
        return s;
    }
    Vector vec() {
        const std::uint64_t n = u64();
        need(8 * n);
        Vector v(static_cast<Index>(n));
        for (Index i = 0; i < v.size(); ++i) v[i] = f64();
        return v;
    }
    Matrix mat() {
        const std::uint64_t r = u64();
        const std::uint64_t c = u64();
        need(8 * r * c);
        Matrix m(static_cast<Index>(r), static_cast<Index>(c));
        for (Index i = 0; i < m.rows(); ++i) {
            for (Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
        }
        return m;
    }
    std::size_t remaining() const { return buf_.size() - pos_; }
    bool done() const { return pos_ == buf_.size(); }

private:
    void need(std::uint64_t n) const {
        if (pos_ + n > buf_.size()) {
            throw CorruptArchive("archive truncated: need " + std::to_string(n) +
                                 " bytes at offset " + std::to_string(pos_));
        }
    }
    const std::string& buf_;
    std::size_t pos_ = 0;
};

}  // namespace sodip
