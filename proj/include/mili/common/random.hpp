#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mili {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a root seed and a path of indices,
// e.g. derive_seed(seed, {kDemoStream, task, demo, attempt}).
constexpr std::uint64_t derive_seed(std::uint64_t root,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(root);
  for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(root, path));
}

// Stream tags so that different consumers of one seed never collide.
namespace stream {
inline constexpr std::uint64_t kTasks = 1;
inline constexpr std::uint64_t kDemos = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kTrain = 4;
inline constexpr std::uint64_t kCollect = 5;
inline constexpr std::uint64_t kEval = 6;
inline constexpr std::uint64_t kVocabulary = 7;
inline constexpr std::uint64_t kBaseline = 8;
inline constexpr std::uint64_t kRetrain = 9;
}  // namespace stream

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

// Uniform index in [0, n); n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace mili
