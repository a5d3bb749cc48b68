#pragma once

#include <cstdint>
#include <random>

#include "featinv/tensor.hpp"

namespace featinv {

// Deterministic RNG. mt19937_64 is fully specified by the standard and the
// transforms below avoid std::*_distribution, whose output is
// implementation-defined. Same seed, same stream, everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in (0,1]
  double uniform() {
    return (static_cast<double>(eng_() >> 11) + 1.0) / 9007199254740992.0;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi);  // inclusive bounds

  // Box-Muller, no cached spare so the stream is position-independent.
  double normal();
  double normal(double mean, double std) { return mean + std * normal(); }

  // standard Laplace via inverse CDF
  double laplace();

  void fill_normal(Tensor& t, double mean, double std);
  void fill_uniform(Tensor& t, double lo, double hi);

  // Fisher-Yates
  void shuffle(std::vector<int>& idx);

  // stable derived stream for a named sub-purpose
  static std::uint64_t derive(std::uint64_t seed, const char* tag);

 private:
  std::mt19937_64 eng_;
};

}  // namespace featinv
