#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace gloc {

// splitmix64 finalizer; good avalanche, cheap enough to rebuild per stream.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ull));
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b), c);
}

// Independent substream keyed by (seed, stream ids). Streams derived from
// distinct keys are order-independent: drawing from one never advances
// another, so per-view / per-trial results do not depend on evaluation order.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t s1,
                                 std::uint64_t s2 = 0) {
  return std::mt19937_64(mix64(seed, s1, s2));
}

inline Eigen::VectorXd normal_vector(std::mt19937_64& rng, int dim,
                                     double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = sigma * n(rng);
  return v;
}

// Unit vector uniform on the sphere S^{dim-1}.
inline Eigen::VectorXd random_unit_vector(std::mt19937_64& rng, int dim) {
  Eigen::VectorXd v = normal_vector(rng, dim);
  double n = v.norm();
  while (n < 1e-12) {
    v = normal_vector(rng, dim);
    n = v.norm();
  }
  return v / n;
}

}  // namespace gloc
