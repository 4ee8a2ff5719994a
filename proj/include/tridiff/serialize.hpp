#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace tridiff {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

// little-endian byte buffer writer
class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void f64_span(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
    void i32_span(const std::vector<int>& v) {
        u64(v.size());
        for (int x : v) u32(static_cast<uint32_t>(x));
    }
    void u64_span(const std::vector<uint64_t>& v) {
        u64(v.size());
        for (uint64_t x : v) u64(x);
    }

    const std::vector<uint8_t>& bytes() const { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<uint8_t> bytes) : buf_(std::move(bytes)) {}

    uint8_t u8() { return take(1)[0]; }
    uint32_t u32() {
        const uint8_t* p = take(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
        return v;
    }
    uint64_t u64() {
        const uint8_t* p = take(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
        return v;
    }
    int64_t i64() { return static_cast<int64_t>(u64()); }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        const uint8_t* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    std::vector<double> f64_span() {
        uint64_t n = u64();
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    std::vector<int> i32_span() {
        uint64_t n = u64();
        std::vector<int> v(n);
        for (auto& x : v) x = static_cast<int>(u32());
        return v;
    }
    std::vector<uint64_t> u64_span() {
        uint64_t n = u64();
        std::vector<uint64_t> v(n);
        for (auto& x : v) x = u64();
        return v;
    }

    size_t remaining() const { return buf_.size() - pos_; }
    const std::vector<uint8_t>& bytes() const { return buf_; }
    size_t pos() const { return pos_; }

private:
    const uint8_t* take(size_t n) {
        if (pos_ + n > buf_.size()) throw IoError("truncated stream");
        const uint8_t* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::vector<uint8_t> buf_;
    size_t pos_ = 0;
};

// frames the payload with a magic tag, a format version, and a trailing CRC32
void write_framed_file(const std::string& path, const char magic[4], uint32_t version,
                       const ByteWriter& payload);

// verifies magic, version, and checksum; returns the payload
ByteReader read_framed_file(const std::string& path, const char magic[4],
                            uint32_t expected_version);

uint64_t fnv1a64(const uint8_t* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);
inline uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(reinterpret_cast<const uint8_t*>(s.data()), s.size());
}

}  // namespace tridiff
