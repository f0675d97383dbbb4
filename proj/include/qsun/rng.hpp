#pragma once

#include <cstdint>

namespace qsun::rng {

// Counter-based generator: every draw is a pure function of its key, so
// results do not depend on evaluation order or on the number of workers.

constexpr std::uint64_t mix64(std::uint64_t x)
{
    // SplitMix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
    std::uint64_t h = mix64(seed ^ 0x5153554e2d726e67ULL);
    h = mix64(h ^ a);
    h = mix64(h ^ (b * 0xd1b54a32d192ed03ULL));
    h = mix64(h ^ (c * 0x8cb92ba72f3d8dd7ULL));
    return h;
}

// Uniform on [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits)
{
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform on [-1/2, 1/2).
constexpr double to_centered(std::uint64_t bits)
{
    return to_unit(bits) - 0.5;
}

enum class Field : std::uint64_t { h = 1, g = 2 };

// Disorder draw keyed by (seed, realization, site, field kind).
inline double disorder_value(std::uint64_t seed, std::uint64_t realization, int site, Field kind)
{
    return to_centered(hash_key(seed, realization, static_cast<std::uint64_t>(site), static_cast<std::uint64_t>(kind)));
}

// Sequential stream for Monte Carlo probes; stream id separates workers or
// purposes, the counter advances per draw.
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    std::uint64_t next_bits() { return hash_key(seed_, stream_ | (1ULL << 63), counter_++, 0x7); }
    double uniform() { return to_unit(next_bits()); }
    double centered() { return to_centered(next_bits()); }
    std::uint64_t counter() const { return counter_; }
    void seek(std::uint64_t counter) { counter_ = counter; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

} // namespace qsun::rng
