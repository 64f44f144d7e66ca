#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hma {

// Independent generator for one named consumer (e.g. "backbone", "shuffle")
// of a run seed. Components draw from their own stream, so enabling or
// resizing one component never shifts another's initialization.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view stream) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char c : stream) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace hma
