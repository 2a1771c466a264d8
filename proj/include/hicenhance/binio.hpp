#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace hicenhance::binio {

// Little-endian fixed-width scalar I/O for the binary container formats.

inline void put_u32(std::ostream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw std::runtime_error("binary read: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& f, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(f, bits);
}

inline float get_f32(std::istream& f) {
    const std::uint32_t bits = get_u32(f);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void put_u8(std::ostream& f, unsigned char v) {
    f.write(reinterpret_cast<const char*>(&v), 1);
}

inline unsigned char get_u8(std::istream& f) {
    unsigned char v;
    f.read(reinterpret_cast<char*>(&v), 1);
    if (!f) throw std::runtime_error("binary read: truncated file");
    return v;
}

}  // namespace hicenhance::binio
