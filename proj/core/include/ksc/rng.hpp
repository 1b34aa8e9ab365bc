#pragma once

#include <cstdint>

#include "ksc/linalg.hpp"

namespace ksc {

// Deterministic random source. Distributions are implemented by hand on top
// of splitmix64 so that streams are stable across platforms and standard
// library versions; std::uniform_real_distribution gives no such guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller (one value per call; pair cached).
  double normal();

  Vec uniform_vec(int dim, double lo, double hi);
  Vec uniform_vec(int dim, const Vec& lo, const Vec& hi);
  Vec normal_vec(int dim, double stddev = 1.0);

  // Derive an independent stream; (seed, stream_id) pairs give disjoint
  // sequences, used for per-sample common random numbers.
  Rng fork(std::uint64_t stream_id) const;

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace ksc
