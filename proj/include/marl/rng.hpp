#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace marl {

using Rng = std::mt19937_64;

// Independent named sub-stream of a master seed ("spawn", "policy", "shuffle", ...).
// The same (seed, name) pair always yields the same generator state.
inline Rng make_stream(std::uint64_t master_seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // splitmix64 finalizer over the combined key
  std::uint64_t z = master_seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  std::seed_seq seq{static_cast<std::uint32_t>(z), static_cast<std::uint32_t>(z >> 32),
                    static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32)};
  return Rng(seq);
}

}  // namespace marl
