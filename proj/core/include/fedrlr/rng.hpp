#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedrlr {

using Rng = std::mt19937_64;

/// Named random sub-streams. Every random draw in a run comes from one of
/// these, keyed by the run seed and (optionally) device and round indices.
enum class Stream : std::uint64_t {
  kDataShard = 1,
  kMinibatch = 2,
  kChannel = 3,
  kNoise = 4,
  kPrecoder = 5,
  kInit = 6,
  kPlantedTask = 7,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(stream));
  h = mix64(h ^ (a + 0x632be59bd9b4e019ULL));
  h = mix64(h ^ (b + 0x8cb92ba72f3d8dd7ULL));
  return h;
}

inline Rng make_stream(std::uint64_t seed, Stream stream, std::uint64_t a = 0,
                       std::uint64_t b = 0) {
  return Rng(derive_seed(seed, stream, a, b));
}

}  // namespace fedrlr
