#pragma once

// Leapfrog integration and the HMC / HMC-pCN transition kernels.

#include <algorithm>
#include <limits>
#include <numbers>
#include <random>

#include "latentmc/sampler/posterior.hpp"

namespace latentmc {

/// Energy error beyond which a trajectory counts as divergent.
inline constexpr double kDivergenceThreshold = 1000.0;

struct HmcParams {
  double epsilon = 0.1;
  int n_leapfrog = 10;
  double beta = 0.5;
  Vector mass;  // diagonal of M; empty means identity
  /// Negate the retained momentum on rejection before the partial refresh.
  bool flip_on_reject = false;

  void validate(std::size_t dim) const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw Error("HmcParams: epsilon must be positive");
    if (n_leapfrog < 1) throw Error("HmcParams: n_leapfrog must be >= 1");
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error("HmcParams: beta must lie in [0, 1]");
    if (!mass.empty()) {
      if (mass.size() != dim) throw ShapeError("HmcParams: mass length does not match latent dimension");
      for (double m : mass)
        if (!(m > 0.0) || !std::isfinite(m)) throw Error("HmcParams: mass entries must be positive");
    }
  }
  double mass_at(std::size_t i) const { return mass.empty() ? 1.0 : mass[i]; }
};

struct ChainState {
  Vector z;
  Vector r;
  double potential = 0.0;
  Vector grad;
};

template <DifferentiablePotential P>
ChainState make_state(const P& post, Vector z, Vector r = {}) {
  if (z.size() != post.dim()) throw ShapeError("make_state: latent dimension mismatch");
  if (r.empty()) r.assign(z.size(), 0.0);
  if (r.size() != z.size()) throw ShapeError("make_state: momentum dimension mismatch");
  auto pv = post.evaluate(z);
  return {std::move(z), std::move(r), pv.value, std::move(pv.grad)};
}

/// K(r) = r^T M^{-1} r / 2 + log((2 pi)^d |M|) / 2.
inline double kinetic(std::span<const double> r, std::span<const double> mass = {}) {
  if (!mass.empty() && mass.size() != r.size()) throw ShapeError("kinetic: mass length mismatch");
  double quad = 0.0, logdet = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double m = mass.empty() ? 1.0 : mass[i];
    quad += r[i] * r[i] / m;
    logdet += std::log(m);
  }
  const double d = static_cast<double>(r.size());
  return 0.5 * quad + 0.5 * (d * std::log(2.0 * std::numbers::pi) + logdet);
}

inline double hamiltonian(const ChainState& s, std::span<const double> mass = {}) {
  return s.potential + kinetic(s.r, mass);
}

/// min{1, exp(H - H*)}; a non-finite proposal is never accepted.
inline double acceptance_probability(double h_current, double h_proposed) {
  if (!std::isfinite(h_proposed)) return 0.0;
  const double d = h_current - h_proposed;
  return d >= 0.0 ? 1.0 : std::exp(d);
}

struct LeapfrogResult {
  ChainState state;
  bool diverged = false;
  int gradient_evaluations = 0;
};

/// n_leapfrog steps of kick(eps/2) drift(eps) kick(eps/2), with interior
/// half-kicks fused. The gradient cached in `start` is reused, so a trajectory
/// costs n_leapfrog new evaluations (n_leapfrog + 1 counting the cached one).
template <DifferentiablePotential P>
LeapfrogResult leapfrog(const ChainState& start, const P& post, const HmcParams& p) {
  LeapfrogResult out{start, false, 0};
  auto& s = out.state;
  const double eps = p.epsilon;
  const std::size_t d = s.z.size();
  axpy(-0.5 * eps, s.grad, s.r);
  for (int step = 0; step < p.n_leapfrog; ++step) {
    for (std::size_t i = 0; i < d; ++i) s.z[i] += eps * s.r[i] / p.mass_at(i);
    PotentialValue pv;
    try {
      pv = post.evaluate(s.z);
    } catch (const NumericalError&) {
      out.diverged = true;
      return out;
    }
    ++out.gradient_evaluations;
    s.potential = pv.value;
    s.grad = std::move(pv.grad);
    if (!std::isfinite(s.potential) || !all_finite(s.grad)) {
      out.diverged = true;
      return out;
    }
    axpy(step + 1 == p.n_leapfrog ? -0.5 * eps : -eps, s.grad, s.r);
  }
  if (!all_finite(s.z) || !all_finite(s.r)) out.diverged = true;
  return out;
}

template <class Rng>
Vector sample_momentum(std::size_t dim, const HmcParams& p, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector r(dim);
  for (std::size_t i = 0; i < dim; ++i) r[i] = std::sqrt(p.mass_at(i)) * normal(rng);
  return r;
}

/// r <- sqrt(1 - beta^2) r + beta xi, xi ~ N(0, M). Preserves N(0, M).
template <class Rng>
void refresh_momentum(Vector& r, const HmcParams& p, Rng& rng) {
  const double keep = std::sqrt(std::max(0.0, 1.0 - p.beta * p.beta));
  const auto xi = sample_momentum(r.size(), p, rng);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = keep * r[i] + p.beta * xi[i];
}

struct StepResult {
  bool accepted = false;
  bool diverged = false;
  double accept_prob = 0.0;
};

namespace detail {

template <DifferentiablePotential P, class Rng>
StepResult metropolis(ChainState& state, const P& post, const HmcParams& p, Rng& rng) {
  const double h0 = hamiltonian(state, p.mass);
  auto lf = leapfrog(state, post, p);
  StepResult res;
  double h1 = std::numeric_limits<double>::infinity();
  if (!lf.diverged) h1 = hamiltonian(lf.state, p.mass);
  if (lf.diverged || !std::isfinite(h1) || std::abs(h1 - h0) > kDivergenceThreshold) {
    res.diverged = true;
    res.accept_prob = 0.0;
  } else {
    res.accept_prob = acceptance_probability(h0, h1);
  }
  // one uniform per step keeps the random stream aligned across outcomes
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  if (!res.diverged && u < res.accept_prob) {
    state = std::move(lf.state);
    res.accepted = true;
  }
  return res;
}

}  // namespace detail

/// Full momentum resample, leapfrog, Metropolis accept on H.
template <DifferentiablePotential P, class Rng>
StepResult hmc_step(ChainState& state, const P& post, const HmcParams& p, Rng& rng) {
  state.r = sample_momentum(state.z.size(), p, rng);
  return detail::metropolis(state, post, p, rng);
}

/// Leapfrog from the persistent (z, r), joint accept/reject, then partial
/// momentum refresh. The refresh is applied after rejections too.
template <DifferentiablePotential P, class Rng>
StepResult hmc_pcn_step(ChainState& state, const P& post, const HmcParams& p, Rng& rng) {
  auto res = detail::metropolis(state, post, p, rng);
  if (!res.accepted && p.flip_on_reject)
    for (auto& v : state.r) v = -v;
  refresh_momentum(state.r, p, rng);
  return res;
}

struct PcnState {
  Vector x;
  double phi = 0.0;
};

template <PcnTarget P>
PcnState make_pcn_state(const P& target, Vector x) {
  if (x.size() != target.dim()) throw ShapeError("make_pcn_state: dimension mismatch");
  const double phi = target.phi(x);
  return {std::move(x), phi};
}

/// x* = sqrt(1 - beta^2) x + beta xi, accepted with min{1, exp(phi(x) - phi(x*))}.
template <PcnTarget P, class Rng>
StepResult pcn_step(PcnState& state, const P& target, double beta, Rng& rng) {
  if (!(beta > 0.0 && beta <= 1.0)) throw Error("pcn_step: beta must lie in (0, 1]");
  const double keep = std::sqrt(1.0 - beta * beta);
  std::normal_distribution<double> normal;
  Vector prop(state.x.size());
  for (std::size_t i = 0; i < prop.size(); ++i) prop[i] = keep * state.x[i] + beta * normal(rng);
  double phi = std::numeric_limits<double>::infinity();
  StepResult res;
  try {
    phi = target.phi(prop);
  } catch (const NumericalError&) {
    res.diverged = true;
  }
  if (!std::isfinite(phi)) res.diverged = true;
  res.accept_prob = res.diverged ? 0.0 : acceptance_probability(state.phi, phi);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (unif(rng) < res.accept_prob) {
    state.x = std::move(prop);
    state.phi = phi;
    res.accepted = true;
  }
  return res;
}

/// Nesterov dual averaging of log(epsilon) towards a target acceptance rate.
class DualAveraging {
public:
  explicit DualAveraging(double epsilon0, double target = 0.65)
      : mu_(std::log(10.0 * epsilon0)), target_(target), log_eps_(std::log(epsilon0)) {}

  double update(double accept_prob) {
    ++t_;
    const double t = static_cast<double>(t_);
    const double eta = 1.0 / (t + kT0);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
    log_eps_ = mu_ - std::sqrt(t) / kGamma * h_bar_;
    const double w = std::pow(t, -kKappa);
    log_eps_bar_ = w * log_eps_ + (1.0 - w) * log_eps_bar_;
    return std::exp(log_eps_);
  }
  double current() const { return std::exp(log_eps_); }
  double final_epsilon() const { return t_ == 0 ? current() : std::exp(log_eps_bar_); }

private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double mu_;
  double target_;
  double log_eps_;
  double log_eps_bar_ = 0.0;
  double h_bar_ = 0.0;
  std::size_t t_ = 0;
};

}  // namespace latentmc
