#pragma once

#include <cstdint>
#include <random>

namespace ddpm {

/// 64-bit mixing hash (splitmix64 finalizer). Used to derive independent
/// RNG streams from (seed, T, t, chain) tuples so that parallel execution
/// order never changes results.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a,
                                   std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ (a + 0x632be59bd9b4e019ULL));
  h = mix64(h ^ (b + 0xd1b54a32d192ed03ULL));
  h = mix64(h ^ (c + 0x8bb84b93962eacc9ULL));
  return h;
}

/// Records how a batch's random stream was derived; replaying the record
/// reproduces the batch bit-for-bit in the same floating-point environment.
struct RngLineage {
  std::uint64_t user_seed = 0;
  std::uint64_t horizon = 0;   // T
  std::uint64_t time_index = 0;
  std::uint64_t stream = 0;    // derived stream key

  static RngLineage derive(std::uint64_t user_seed, std::uint64_t horizon,
                           std::uint64_t time_index) {
    RngLineage l;
    l.user_seed = user_seed;
    l.horizon = horizon;
    l.time_index = time_index;
    l.stream = derive_stream(user_seed, horizon, time_index);
    return l;
  }
};

inline std::mt19937_64 make_engine(std::uint64_t stream) {
  return std::mt19937_64(stream);
}

}  // namespace ddpm
