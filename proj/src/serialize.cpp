#include "tridiff/serialize.hpp"

#include <array>
#include <cstdio>
#include <memory>

namespace tridiff {

namespace {
std::array<uint32_t, 256> make_crc_table() {
    std::array<uint32_t, 256> table{};
    for (uint32_t i = 0; i < 256; ++i) {
        uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}
}  // namespace

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed) {
    static const auto table = make_crc_table();
    uint32_t c = seed ^ 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

uint64_t fnv1a64(const uint8_t* data, size_t len, uint64_t seed) {
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_framed_file(const std::string& path, const char magic[4], uint32_t version,
                       const ByteWriter& payload) {
    ByteWriter head;
    for (int i = 0; i < 4; ++i) head.u8(static_cast<uint8_t>(magic[i]));
    head.u32(version);

    std::vector<uint8_t> all = head.bytes();
    all.insert(all.end(), payload.bytes().begin(), payload.bytes().end());
    const uint32_t sum = crc32(all.data(), all.size());
    ByteWriter tail;
    tail.u32(sum);
    all.insert(all.end(), tail.bytes().begin(), tail.bytes().end());

    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), std::fclose);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    if (std::fwrite(all.data(), 1, all.size(), f.get()) != all.size())
        throw IoError("short write to '" + path + "'");
}

ByteReader read_framed_file(const std::string& path, const char magic[4],
                            uint32_t expected_version) {
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "rb"), std::fclose);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::fseek(f.get(), 0, SEEK_END);
    const long size = std::ftell(f.get());
    std::fseek(f.get(), 0, SEEK_SET);
    if (size < 12) throw IoError("'" + path + "' is too short to be valid");
    std::vector<uint8_t> all(static_cast<size_t>(size));
    if (std::fread(all.data(), 1, all.size(), f.get()) != all.size())
        throw IoError("short read from '" + path + "'");

    const size_t body = all.size() - 4;
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(all[body + i]) << (8 * i);
    if (crc32(all.data(), body) != stored)
        throw IoError("checksum mismatch in '" + path + "' (file corrupt or truncated)");

    for (int i = 0; i < 4; ++i)
        if (all[i] != static_cast<uint8_t>(magic[i]))
            throw IoError("'" + path + "' has wrong magic tag");
    uint32_t version = 0;
    for (int i = 0; i < 4; ++i) version |= static_cast<uint32_t>(all[4 + i]) << (8 * i);
    if (version != expected_version)
        throw IoError("'" + path + "' has format version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(expected_version));

    std::vector<uint8_t> payload(all.begin() + 8, all.begin() + body);
    return ByteReader(std::move(payload));
}

}  // namespace tridiff
