#pragma once

#include <cstdint>
#include <random>

namespace fibretrap {

using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates nearby seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream for (master seed, scan point); schedule-independent.
inline Rng stream_rng(std::uint64_t master, std::uint64_t index, std::uint64_t salt = 0)
{
    return Rng(mix_seed(mix_seed(master ^ mix_seed(salt)) + index));
}

}  // namespace fibretrap
