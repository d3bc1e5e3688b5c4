#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace prgp {

using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31U);
}

// Derives an independent stream seed from a tuple of integers, e.g.
// (run seed, island id, generation). Order matters.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept
{
    std::uint64_t h = 0x51ed270b27a3c9e5ULL;
    for (auto p : parts) {
        h = mix64(h ^ mix64(p));
    }
    return h;
}

inline Rng make_rng(std::initializer_list<std::uint64_t> parts) { return Rng { derive_seed(parts) }; }

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n)
{
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Radical inverse of index in the given prime base.
inline double halton(std::uint64_t index, unsigned base) noexcept
{
    double f = 1.0;
    double r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

// count Halton points in the box [lower, upper], starting at index 1.
std::vector<std::vector<double>> halton_points(
    std::size_t count, const std::vector<double>& lower, const std::vector<double>& upper);

} // namespace prgp
