#pragma once

#include <cstdint>
#include <random>

namespace lcpvae {

/// Deterministic generator for one (seed, purpose, index) triple. Separate
/// purposes get statistically independent streams from the same seed.
std::mt19937_64 seeded_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0);

}  // namespace lcpvae
