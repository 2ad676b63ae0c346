#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace statekit {

using Rng = std::mt19937_64;

/// Independent generator for a named substream of `seed`. Substreams are
/// keyed by integers (e.g. replication index, fold, purpose tag), so work
/// items own their randomness regardless of execution order.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * stream.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (std::uint64_t s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Substream purpose tags.
namespace stream {
inline constexpr std::uint64_t kFolds = 0x666f6c6473ULL;
inline constexpr std::uint64_t kTrees = 0x7472656573ULL;
inline constexpr std::uint64_t kPool = 0x706f6f6cULL;
inline constexpr std::uint64_t kOutliers = 0x6f75746cULL;
inline constexpr std::uint64_t kReplication = 0x7265706cULL;
inline constexpr std::uint64_t kBootstrap = 0x626f6f74ULL;
}  // namespace stream

}  // namespace statekit
