#pragma once

#include <cstdint>
#include <random>

namespace d2dfl {

using Engine = std::mt19937_64;

/// What a random stream is used for. Part of the stream key, so two
/// consumers never share draws even with identical indices.
enum class Purpose : std::uint64_t {
  placement = 1,
  fading = 2,
  mask = 3,
  batch = 4,
  reparam = 5,
  init = 6,
  topology = 7,
  partition = 8,
  dataset = 9,
  diagnostic = 10,
  sampling = 11,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the stream identified by (seed, purpose, round, a, b).
/// `a`/`b` are usually an ordered client pair or (client, example).
inline constexpr std::uint64_t stream_seed(std::uint64_t seed, Purpose purpose,
                                           std::uint64_t round = 0,
                                           std::uint64_t a = 0,
                                           std::uint64_t b = 0) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ round);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return h;
}

inline Engine make_stream(std::uint64_t seed, Purpose purpose,
                          std::uint64_t round = 0, std::uint64_t a = 0,
                          std::uint64_t b = 0) {
  return Engine(stream_seed(seed, purpose, round, a, b));
}

}  // namespace d2dfl
