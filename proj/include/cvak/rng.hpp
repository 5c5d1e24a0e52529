#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cvak {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Per-purpose subseed. Every random stream in the toolkit is derived from
/// one root seed through this function, keyed by a purpose tag and an index,
/// so a partial rerun draws exactly the numbers a full run would.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0)
{
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (const char c : purpose) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(root ^ h) + index);
}

inline Rng make_rng(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0)
{
    return Rng{derive_seed(root, purpose, index)};
}

} // namespace cvak
