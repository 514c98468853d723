#include "mbbr/rng.hpp"

#include <stdexcept>

namespace mbbr {

namespace {

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

SplitRng::SplitRng(uint64_t seed) : seed_(seed), engine_(seed) {}

SplitRng SplitRng::fork(std::string_view tag) const {
  return SplitRng(splitmix64(seed_ ^ fnv1a(tag)));
}

uint64_t SplitRng::next_u64() { return engine_(); }

double SplitRng::uniform() {
  // 53 high bits -> [0, 1), exact on every platform
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SplitRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

int64_t SplitRng::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: hi < lo");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(engine_());  // full 64-bit range
  // rejection sampling, no modulo bias
  uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return lo + static_cast<int64_t>(x % span);
}

double SplitRng::normal(double mean, double stddev) {
  // Irwin-Hall: sum of 12 uniforms has mean 6, variance 1. Avoids libm so the
  // stream is bit-identical everywhere. Tails clip at 6 sigma, fine for our use.
  double s = 0.0;
  for (int i = 0; i < 12; ++i) s += uniform();
  return mean + stddev * (s - 6.0);
}

std::vector<size_t> SplitRng::permutation(size_t n) {
  std::vector<size_t> p(n);
  for (size_t i = 0; i < n; ++i) p[i] = i;
  for (size_t i = n; i > 1; --i) {
    size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

bool SplitRng::flip(double p) { return uniform() < p; }

}  // namespace mbbr
