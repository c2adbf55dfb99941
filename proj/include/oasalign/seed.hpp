#pragma once

#include <cstdint>
#include <string_view>

namespace oasalign {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Per-utterance seed: mix64(global_seed ^ fnv1a64(utterance_id)). Stable across
/// runs, platforms and thread counts.
constexpr std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view utterance_id) {
  return mix64(global_seed ^ fnv1a64(utterance_id));
}

}  // namespace oasalign
