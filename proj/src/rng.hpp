#pragma once

#include <cstdint>
#include <random>

namespace contmgr {

// Seedable generator with a fixed, documented algorithm so trajectories are
// reproducible across platforms and standard libraries:
//   engine   std::mt19937_64 (bit-exact by the C++ standard)
//   uniform  top 53 bits of one engine draw, scaled to [0, 1)
//   normal   Marsaglia polar method, second variate cached
// std::*_distribution is deliberately not used; its output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi). Returns lo when lo == hi.
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Standard normal.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t x);

// Child seed for stream `index` under `master`. Stable across runs and
// independent of how work is split between workers.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b);

}  // namespace contmgr
