#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace rcf {

/// All randomness flows through explicitly passed engines of this type.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer; derives an independent child seed for a sub-stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(derive_seed(seed, stream));
}

/// Circularly-symmetric complex Gaussian with E|z|^2 = 1.
inline std::complex<double> complex_gaussian(Rng& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

/// Uniform direction on the unit sphere of C^n (isotropic in R^{2n}).
inline Eigen::VectorXcd unit_sphere_sample(Eigen::Index n, Rng& rng) {
  Eigen::VectorXcd v(n);
  double norm2 = 0.0;
  do {
    for (Eigen::Index k = 0; k < n; ++k) v(k) = complex_gaussian(rng);
    norm2 = v.squaredNorm();
  } while (norm2 == 0.0);
  return v / std::sqrt(norm2);
}

}  // namespace rcf
