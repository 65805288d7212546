#pragma once

#include <cstdint>

namespace qcl {

// SplitMix64 finaliser; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seed of substream `stream` for trajectory `index` under `master`.
// Trajectory k draws its noise for oscillator i from stream 2i and its
// initial condition for oscillator i from stream 2i + 1.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                    std::uint64_t stream = 0) noexcept {
    return mix64(mix64(mix64(master) ^ (index + 0x632be59bd9b4e019ULL)) ^
                 (stream * 0xd1342543de82ef95ULL + 1));
}

namespace streams {
constexpr std::uint64_t noise(std::uint64_t oscillator) noexcept { return 2 * oscillator; }
constexpr std::uint64_t initial(std::uint64_t oscillator) noexcept { return 2 * oscillator + 1; }
}  // namespace streams

}  // namespace qcl
