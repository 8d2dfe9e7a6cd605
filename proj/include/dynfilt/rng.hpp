#pragma once

#include <cstdint>

namespace dynfilt {

// SplitMix64 finalizer; decorrelates nearby integer seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for an independent stream (trial index, purpose tag, ...) under a base seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
}

inline constexpr std::uint64_t kMeasurementStream = 0x6d656173ULL;  // "meas"
inline constexpr std::uint64_t kScenarioStream = 0x7363656eULL;     // "scen"

}  // namespace dynfilt
