#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace glide {

// Counter-based deterministic RNG. Each (seed, stream-name) pair is an
// independent stream; the n-th draw from a stream is a pure function of
// (seed, stream, n), so results do not depend on interleaving with other
// streams or on how many values earlier code consumed from them.
class Rng {
 public:
  Rng(uint64_t seed, const std::string& stream);

  uint64_t next_u64();
  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n); n must be > 0.
  uint64_t below(uint64_t n);
  // Standard normal via Box-Muller (two fresh uniforms per call; no cache,
  // so the draw index stays a pure function of the counter).
  double normal();
  double normal(double mean, double stddev);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }
  uint64_t key() const { return key_; }

 private:
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64(const std::string& s);
uint64_t splitmix64(uint64_t x);

}  // namespace glide
