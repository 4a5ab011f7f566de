#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace senti::detail {

inline void write_f32(std::ostream& out, double value) {
    const auto f = static_cast<float>(value);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

inline bool read_f32(std::istream& in, double& value) {
    std::uint32_t bits;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) return false;
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    value = f;
    return true;
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline bool read_u32(std::istream& in, std::uint32_t& v) {
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) return false;
    if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
    return true;
}

}  // namespace senti::detail
