// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace smp {

// Deterministic random source. The engine is std::mt19937_64 (bit-exact by
// the standard); uniform and normal variates are derived here by hand so the
// draw sequence does not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();                       // standard normal, Box-Muller
  int uniform_int(int lo, int hi);       // inclusive bounds, unbiased

  // Independent child stream fully determined by (this stream's seed, id);
  // does not consume draws from the parent.
  Rng derived(std::uint64_t stream_id) const;

  std::uint64_t seed() const { return seed_; }

  // Textual state round-trip (engine state plus the Box-Muller spare).
  std::string serialize() const;
  static Rng deserialize(const std::string& text);

 private:
  std::uint64_t seed_ = 0;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 scrambler used for stream derivation and seed hashing.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace smp
