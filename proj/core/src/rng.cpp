#include "featinv/rng.hpp"

#include <cmath>
#include <cstring>

namespace featinv {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

int Rng::uniform_int(int lo, int hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(next_u64() % span);
}

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Rng::laplace() {
  const double u = uniform() - 0.5;  // (-0.5, 0.5]
  const double mag = std::log(1.0 - 2.0 * std::fabs(u) + 1e-300);
  return u >= 0 ? -mag : mag;
}

void Rng::fill_normal(Tensor& t, double mean, double std) {
  for (long i = 0; i < t.size(); ++i) t[i] = mean + std * normal();
}

void Rng::fill_uniform(Tensor& t, double lo, double hi) {
  for (long i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
}

void Rng::shuffle(std::vector<int>& idx) {
  for (size_t i = idx.size(); i > 1; --i) {
    const size_t j = next_u64() % i;
    std::swap(idx[i - 1], idx[j]);
  }
}

std::uint64_t Rng::derive(std::uint64_t seed, const char* tag) {
  std::uint64_t h = fnv1a64(tag, std::strlen(tag));
  h = fnv1a64(&seed, sizeof(seed), h);
  return h ? h : 0x9e3779b97f4a7c15ull;
}

}  // namespace featinv
