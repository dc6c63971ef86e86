#include "kws/rng.hpp"

namespace kws {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_key(std::uint64_t seed, std::string_view purpose, std::uint64_t round,
                         std::string_view client) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ fnv1a64(purpose));
  k = splitmix64(k ^ round);
  // Length prefix keeps ("ab", "") and ("a", "b")-style keys apart.
  k = splitmix64(k ^ client.size());
  k = splitmix64(k ^ fnv1a64(client));
  return k;
}

Rng derive_stream(std::uint64_t seed, std::string_view purpose, std::uint64_t round,
                  std::string_view client) {
  const std::uint64_t k = derive_key(seed, purpose, round, client);
  std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  return Rng(seq);
}

}  // namespace kws
