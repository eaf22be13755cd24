#pragma once

#include <cstdint>
#include <random>

namespace mlc {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Child seed from (master, a, b). Replicates and starts seeded this way get
// identical streams whether they run serially or on parallel workers.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64(s);
  s = h ^ (a * 0x9e3779b97f4a7c15ULL + 0x6a09e667f3bcc909ULL);
  h = splitmix64(s);
  s = h ^ (b * 0xd1342543de82ef95ULL + 0xbb67ae8584caa73bULL);
  return splitmix64(s);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace mlc
