#pragma once

#include <cstdint>
#include <random>

namespace fednh {

// Named random streams derived from the master seed. Every consumer of
// randomness draws from its own stream so that adding rounds, clients or
// methods never perturbs the draws of another consumer.
enum class Stream : std::uint64_t {
  TrainData = 1,
  TestData = 2,
  Partition = 3,
  Init = 4,
  Prototypes = 5,
  Training = 6,
  Sampling = 7,
  Evaluation = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ (a + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (b + 0x85157af5ULL));
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
  return Rng(derive_seed(master, stream, a, b));
}

}  // namespace fednh
