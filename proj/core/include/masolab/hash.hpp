#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string_view>

namespace masolab {

/// Incremental 64-bit FNV-1a.
class Fnv1a64 {
public:
    void bytes(std::string_view s) noexcept {
        for (char c : s) byte(static_cast<unsigned char>(c));
    }
    void u64(std::uint64_t v) noexcept {
        for (int i = 0; i < 8; ++i) byte(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
    }
    void f64(double v) noexcept { u64(std::bit_cast<std::uint64_t>(v)); }
    void f64(std::span<const double> v) noexcept {
        u64(v.size());
        for (double d : v) f64(d);
    }
    std::uint64_t value() const noexcept { return h_; }

private:
    void byte(unsigned char c) noexcept {
        h_ ^= c;
        h_ *= 0x100000001b3ULL;
    }
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view s) noexcept {
    Fnv1a64 h;
    h.bytes(s);
    return h.value();
}

}  // namespace masolab
