#pragma once

#include <random>

#include "latentmc/forward/radon.hpp"

namespace latentmc {

/// Noise standard deviation never drops below this, so callers may divide by it.
inline constexpr double kSigmaFloor = 1e-12;

struct NoiseModel {
  double gamma = 0.0;
  double sigma = kSigmaFloor;
};

struct NoisySinogram {
  Sinogram sinogram;
  double sigma;
};

/// sigma = gamma * max|clean|; returns clean + N(0, sigma^2 I).
template <class Rng>
NoisySinogram add_noise(const Sinogram& clean, double gamma, Rng& rng) {
  if (!(gamma >= 0.0)) throw Error("add_noise: gamma must be non-negative");
  if (gamma == 0.0) return {clean, kSigmaFloor};
  const double sigma = std::max(gamma * max_abs(clean.values.values), kSigmaFloor);
  std::normal_distribution<double> normal(0.0, sigma);
  NoisySinogram out{clean, sigma};
  for (auto& v : out.sinogram.values.values) v += normal(rng);
  return out;
}

}  // namespace latentmc
