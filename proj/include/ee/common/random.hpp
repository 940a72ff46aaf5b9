#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ee {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-derived seed: the same (seed, tags...) always gives the same
/// stream, independent of evaluation order or thread count.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(seed);
  for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  return Rng(derive_seed(seed, tags));
}

/// Named stream families, so that e.g. the data generator and the trainer
/// never share draws even when configured with the same seed.
enum class Stream : std::uint64_t {
  train_data = 1,
  test_data = 2,
  init = 3,
  training = 4,
  prior = 5,
  enki_noise = 6,
  forward_ic = 7,
  crops = 8,
  moment_var = 9,
  obs_noise = 10,
  split = 11,
};

inline Rng make_rng(std::uint64_t seed, Stream s, std::initializer_list<std::uint64_t> tags = {}) {
  std::uint64_t h = derive_seed(seed, {static_cast<std::uint64_t>(s)});
  return Rng(derive_seed(h, tags));
}

}  // namespace ee
