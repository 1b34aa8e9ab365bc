#include "ksc/rng.hpp"

#include <cmath>

namespace ksc {

std::uint64_t Rng::next_u64() {
  // splitmix64 (Steele, Lea, Flood 2014)
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) return 0;
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = uniform01();
  double u2 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

Vec Rng::uniform_vec(int dim, double lo, double hi) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = uniform(lo, hi);
  return v;
}

Vec Rng::uniform_vec(int dim, const Vec& lo, const Vec& hi) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = uniform(lo[i], hi[i]);
  return v;
}

Vec Rng::normal_vec(int dim, double stddev) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = stddev * normal();
  return v;
}

Rng Rng::fork(std::uint64_t stream_id) const {
  Rng child(state_ ^ (0xA0761D6478BD642Full * (stream_id + 1)));
  child.next_u64();
  return child;
}

}  // namespace ksc
