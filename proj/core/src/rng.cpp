#include "glide/rng.hpp"

#include <cmath>

#include "glide/base.hpp"

namespace glide {

uint64_t fnv1a64(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed, const std::string& stream) {
  // Fold the stream name into the seed so each named stream is decorrelated.
  key_ = splitmix64(seed ^ splitmix64(fnv1a64(stream)));
}

uint64_t Rng::next_u64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

uint64_t Rng::below(uint64_t n) {
  if (n == 0) fail(ErrorCategory::internal, "Rng::below(0)");
  // Modulo bias is < 2^-40 for every n used here; acceptable and deterministic.
  return next_u64() % n;
}

double Rng::normal() {
  // Box-Muller; clamp u1 away from zero so log() stays finite.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

}  // namespace glide
