#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace wsod {

/// Purpose tags keep streams for different consumers disjoint.
enum class StreamTag : std::uint32_t {
  kConditionalNoise = 1,
  kPseudoLabelNoise = 2,
  kBatchOrder = 3,
  kSceneLayout = 4,
  kSceneFeatures = 5,
  kPrototypes = 6,
  kEvalNoise = 7,
};

/// Engine keyed by an arbitrary tuple of counters (seed, round, image, k, ...).
/// The same key always yields the same stream, regardless of the order or
/// thread in which streams are created.
inline std::mt19937_64 keyed_stream(StreamTag tag, std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * key.size() + 1);
  words.push_back(static_cast<std::uint32_t>(tag));
  for (std::uint64_t k : key) {
    words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace wsod
