#pragma once

// Power-iteration estimate of the largest singular value, and spectral
// normalization W / sigma built on it.

#include <random>

#include "latentmc/forward/image.hpp"
#include "latentmc/nn/network.hpp"

namespace latentmc::nn {

/// Below this, a matrix is treated as zero.
inline constexpr double kSigmaEpsilon = 1e-12;

struct PowerIterationResult {
  double sigma = 0.0;
  Vector u;  // left singular vector estimate (rows)
  Vector v;  // right singular vector estimate (cols)
  int iterations = 0;
};

/// `u0` seeds the iteration (length rows); empty means a deterministic random start.
/// Stops after `n_iter` sweeps, or earlier when sigma changes by less than `tol` relative.
inline PowerIterationResult power_iteration(std::span<const double> w, std::size_t rows, std::size_t cols,
                                            int n_iter, std::span<const double> u0 = {}, double tol = 0.0) {
  if (n_iter < 1) throw Error("power_iteration: n_iter must be >= 1");
  if (w.size() != rows * cols) throw ShapeError("power_iteration: weight size mismatch");
  PowerIterationResult res;
  res.u.assign(rows, 0.0);
  res.v.assign(cols, 0.0);
  if (u0.size() == rows && norm(u0) > 0.0) {
    res.u.assign(u0.begin(), u0.end());
  } else {
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal;
    for (auto& x : res.u) x = normal(rng);
  }
  auto normalize = [](Vector& x) {
    const double n = norm(x);
    if (n > 0.0)
      for (auto& e : x) e /= n;
    return n;
  };
  normalize(res.u);
  double prev = 0.0;
  for (int it = 0; it < n_iter; ++it) {
    // v = W^T u
    std::fill(res.v.begin(), res.v.end(), 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) res.v[c] += w[r * cols + c] * res.u[r];
    if (normalize(res.v) == 0.0) {
      res.sigma = 0.0;
      res.iterations = it + 1;
      return res;
    }
    // u = W v
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * res.v[c];
      res.u[r] = acc;
    }
    res.sigma = normalize(res.u);
    res.iterations = it + 1;
    if (tol > 0.0 && std::abs(res.sigma - prev) <= tol * res.sigma) break;
    prev = res.sigma;
  }
  return res;
}

struct SpectralNormalized {
  Matrix weight;
  double sigma_est = 0.0;
  Vector u;
};

/// W_sn = W / sigma_est. A (numerically) zero matrix keeps sigma at the floor and is returned unchanged.
inline SpectralNormalized spectral_normalize(const Matrix& w, int n_iter) {
  auto pi = power_iteration(w.values, w.rows, w.cols, n_iter);
  SpectralNormalized out{w, std::max(pi.sigma, kSigmaEpsilon), std::move(pi.u)};
  for (auto& x : out.weight.values) x /= out.sigma_est;
  return out;
}

/// Divides every SpectralNorm-wrapped weight in `layers` by its estimated norm
/// and stores the converged left singular vector.
inline void bake_spectral_norm(std::vector<Layer>& layers, int n_iter = 200) {
  for (auto& l : layers) {
    if (auto* sn = std::get_if<SpectralNorm>(&l.op)) {
      auto& wt = sn->weight();
      auto pi = power_iteration(wt, sn->matrix_rows(), sn->matrix_cols(), n_iter, {}, 1e-14);
      const double s = std::max(pi.sigma, kSigmaEpsilon);
      for (auto& x : wt) x /= s;
      sn->u = std::move(pi.u);
    } else if (auto* res = std::get_if<Residual>(&l.op)) {
      bake_spectral_norm(res->main, n_iter);
      bake_spectral_norm(res->shortcut, n_iter);
    }
  }
}

inline void bake_spectral_norm(NetworkGraph& net, int n_iter = 200) { bake_spectral_norm(net.layers, n_iter); }

}  // namespace latentmc::nn
