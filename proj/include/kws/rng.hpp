#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace kws {

using Rng = std::mt19937_64;

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

/// Independent stream keyed by (seed, purpose, round, client). Every random
/// draw in the simulator comes from a stream derived this way, so results do
/// not depend on worker scheduling.
Rng derive_stream(std::uint64_t seed, std::string_view purpose, std::uint64_t round = 0,
                  std::string_view client = {});

std::uint64_t derive_key(std::uint64_t seed, std::string_view purpose, std::uint64_t round = 0,
                         std::string_view client = {});

}  // namespace kws
