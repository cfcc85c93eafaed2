#ifndef NBSC_RNG_HPP
#define NBSC_RNG_HPP

#include <cstdint>
#include <random>

namespace nbsc {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of the substream addressed by (stream, index) under `master`. Pure
/// function of its inputs, so trials can run in any order or on any worker.
constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) noexcept
{
    return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ (index * 0xd1b54a32d192ed03ULL));
}

inline Rng substream(std::uint64_t master, std::uint64_t stream, std::uint64_t index)
{
    return Rng(substream_seed(master, stream, index));
}

} // namespace nbsc

#endif // NBSC_RNG_HPP
