#pragma once

#include <cstdint>
#include <random>

namespace delaycast {

// splitmix64; used to derive well-separated per-replicate seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Replicate streams are a pure function of (seed, index), so bootstrap results
// do not depend on worker count or scheduling.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(index + 0x51ed2701ULL));
  return std::mt19937_64(s);
}

// NB2 draw with mean mu and variance mu + theta*mu^2 via the gamma-Poisson
// mixture; theta -> 0 degenerates to Poisson.
inline long sample_nb2(std::mt19937_64& rng, double mu, double theta) {
  if (!(mu > 0)) return 0;
  double rate = mu;
  if (theta > 1e-12) {
    std::gamma_distribution<double> gamma(1.0 / theta, theta * mu);
    rate = gamma(rng);
    if (!(rate > 0)) return 0;
  }
  std::poisson_distribution<long> pois(rate);
  return pois(rng);
}

}  // namespace delaycast
