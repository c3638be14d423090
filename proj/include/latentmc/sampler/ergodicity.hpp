#pragma once

// Numerical check of the growth and local Lipschitz conditions on the data
// misfit F(z) = ||y - A G(z)||^2 / (2 sigma^2) that the latent chains rely on:
//   F(z) <= k (1 + ||z||^2)                    for all z,
//   |F(z) - F(z')| <= k(c) ||z - z'||          for ||z||, ||z'|| < c.
// The constants follow from ||A||, ||G(0)|| and the certified Lipschitz bound L.

#include <random>

#include "latentmc/sampler/posterior.hpp"

namespace latentmc {

struct ErgodicityReport {
  double operator_norm = 0.0;  // ||A||
  double g0_norm = 0.0;        // ||G(0)||
  double y_norm = 0.0;
  double sigma = 0.0;
  double lipschitz = 0.0;  // certified L supplied by the caller
  double radius = 0.0;     // c
  double b2 = 0.0;
  double k = 0.0;
  double k_c = 0.0;
  std::size_t probes = 0;

  double max_growth_ratio = 0.0;     // max F(z) / (k (1 + ||z||^2))
  double max_lipschitz_ratio = 0.0;  // max |F(z) - F(z')| / ||z - z'||
  double max_generator_ratio = 0.0;  // max ||G(z) - G(z')|| / ||z - z'||
  std::size_t growth_violations = 0;
  std::size_t lipschitz_violations = 0;
  std::size_t generator_violations = 0;

  bool passed() const { return growth_violations == 0 && lipschitz_violations == 0 && generator_violations == 0; }
};

/// Uniform draw from the open ball of radius c in R^m.
template <class Rng>
Vector uniform_in_ball(std::size_t m, double c, Rng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector z(m);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (auto& v : z) {
      v = normal(rng);
      n2 += v * v;
    }
  } while (n2 == 0.0);
  const double r = c * std::pow(unif(rng), 1.0 / static_cast<double>(m)) / std::sqrt(n2);
  for (auto& v : z) v *= r;
  return z;
}

/// B^2 with ||G(z)||^2 <= B^2 (1 + ||z||^2): from ||G(z)|| <= ||G(0)|| + L ||z||,
/// ||G(z)||^2 <= 2||G(0)||^2 + 2 L^2 ||z||^2.
inline double growth_b2(double g0_norm, double lipschitz) {
  return 2.0 * g0_norm * g0_norm + 2.0 * lipschitz * lipschitz;
}

template <LinearOperator Op>
ErgodicityReport check_ergodicity_conditions(const LatentPosterior<Op>& post, double lipschitz, std::size_t probes,
                                             double radius, std::uint64_t seed = 1) {
  if (!(lipschitz >= 0.0) || !std::isfinite(lipschitz)) throw Error("ergodicity check: L must be finite");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw Error("ergodicity check: radius must be positive");
  ErgodicityReport rep;
  const std::size_t m = post.dim();
  rep.operator_norm = operator_norm(post.forward_operator());
  rep.g0_norm = norm(post.generate(Vector(m, 0.0)));
  rep.y_norm = norm(post.measurement());
  rep.sigma = post.sigma();
  rep.lipschitz = lipschitz;
  rep.radius = radius;
  rep.probes = probes;
  // norm estimates are padded so that round-off cannot manufacture a violation
  const double a = rep.operator_norm * (1.0 + 1e-9);
  const double s2 = rep.sigma * rep.sigma;
  rep.b2 = growth_b2(rep.g0_norm, lipschitz);
  // F <= (||y||^2 + ||A||^2 ||G(z)||^2) / sigma^2 <= 2 max{||y||^2, B^2 ||A||^2} (1 + ||z||^2) / sigma^2
  rep.k = 2.0 * std::max(rep.y_norm * rep.y_norm, rep.b2 * a * a) / s2;
  rep.k_c = lipschitz * a / s2 * (rep.y_norm + a * (rep.g0_norm + lipschitz * radius));

  std::mt19937_64 rng(seed);
  constexpr double kTol = 1e-9;
  for (std::size_t i = 0; i < probes; ++i) {
    const auto z = uniform_in_ball(m, radius, rng);
    const auto z2 = uniform_in_ball(m, radius, rng);
    const double fz = post.likelihood(z);
    const double fz2 = post.likelihood(z2);
    const double growth = fz / (rep.k * (1.0 + squared_norm(z)));
    rep.max_growth_ratio = std::max(rep.max_growth_ratio, growth);
    if (growth > 1.0 + kTol) ++rep.growth_violations;

    Vector dz(m);
    for (std::size_t j = 0; j < m; ++j) dz[j] = z[j] - z2[j];
    const double dn = norm(dz);
    if (dn == 0.0) continue;
    const double lr = std::abs(fz - fz2) / dn;
    rep.max_lipschitz_ratio = std::max(rep.max_lipschitz_ratio, lr);
    if (lr > rep.k_c * (1.0 + kTol) + kTol) ++rep.lipschitz_violations;

    const auto g = post.generate(z);
    const auto g2 = post.generate(z2);
    double gd = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) gd += (g[j] - g2[j]) * (g[j] - g2[j]);
    const double gr = std::sqrt(gd) / dn;
    rep.max_generator_ratio = std::max(rep.max_generator_ratio, gr);
    if (gr > lipschitz * (1.0 + kTol) + kTol) ++rep.generator_violations;
  }
  return rep;
}

}  // namespace latentmc
