#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mbbr {

// Deterministic RNG with named substreams. std::mt19937_64 itself is pinned by the
// standard, but the std distributions are not, so all transforms are done by hand here.
class SplitRng {
 public:
  explicit SplitRng(uint64_t seed);

  // Child stream derived from this stream's seed and a tag. Independent of how many
  // draws were taken from the parent, so call order can't silently reseed things.
  SplitRng fork(std::string_view tag) const;

  uint64_t seed() const { return seed_; }

  uint64_t next_u64();
  double uniform();                          // [0, 1)
  double uniform(double lo, double hi);      // [lo, hi)
  int64_t uniform_int(int64_t lo, int64_t hi);  // inclusive both ends
  double normal(double mean = 0.0, double stddev = 1.0);

  // Fisher-Yates over [0, n)
  std::vector<size_t> permutation(size_t n);

  // Bernoulli(p)
  bool flip(double p);

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mbbr
