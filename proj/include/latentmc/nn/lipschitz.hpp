#pragma once

// Upper bound on the Lipschitz constant of a network, as a product of per-layer
// bounds (sums across residual branches).
//
// Linear layers use their operator norm (power iteration on the linear part,
// padded by a relative slack). Attention is only locally Lipschitz: its bound
// grows with the norm of its input, so an input radius is propagated through
// the network (||f(x)|| <= ||f(0)|| + L ||x||) and the bound is certified for
// inputs with ||x|| <= input_radius. FRN is globally Lipschitz with constant
// max|gamma| / sqrt(eps); an optional energy floor gives the much tighter
// regional bound max|gamma| / sqrt(floor + eps), reported separately.

#include <limits>
#include <optional>

#include "latentmc/nn/network.hpp"

namespace latentmc::nn {

struct LipschitzOptions {
  /// Radius of the input ball the bound must hold on. Infinity is allowed when
  /// the network has no attention layer with a non-zero gate.
  double input_radius = std::numeric_limits<double>::infinity();
  /// When positive, also compute the regional bound assuming mean(h^2) >= floor at every FRN input.
  double frn_energy_floor = 0.0;
  int power_iterations = 500;
  /// Relative padding applied to power-iteration norm estimates.
  double slack = 1e-6;
};

struct LayerBound {
  std::string name;
  LayerKind kind;
  double bound;
  double regional_bound;
  double output_radius;
};

struct LipschitzReport {
  bool bounded = true;
  double bound = 0.0;           // certified on the input ball
  double regional_bound = 0.0;  // additionally assumes the FRN energy floor
  std::string offending_layer;  // set when !bounded
  std::vector<LayerBound> layers;
  std::vector<std::string> assumptions;
};

namespace detail {

/// Norm of the linear part x -> f(x) - f(0) of an affine layer, by power iteration on A^T A.
template <class L>
double affine_operator_norm(const L& layer, Shape in, int iters) {
  const Tensor zero(in);
  const Tensor offset = layer.forward(zero);
  Tensor v(in);
  std::mt19937_64 rng(0x11b5);
  std::normal_distribution<double> normal;
  for (auto& x : v.data) x = normal(rng);
  double nv = norm(v.data);
  for (auto& x : v.data) x /= nv;
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    Tensor av = layer.forward(v);
    for (std::size_t i = 0; i < av.size(); ++i) av.data[i] -= offset.data[i];
    const Tensor w = layer.backward(v, av, av);
    const double next = norm(w.data);
    if (next == 0.0) return 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = w.data[i] / next;
    const bool done = std::abs(next - lambda) <= 1e-13 * next;
    lambda = next;
    if (done) break;
  }
  return std::sqrt(lambda);
}

inline double spectral_norm_of(const Vector& w, std::size_t rows, std::size_t cols, int iters) {
  // sigma of a small dense matrix via A^T A power iteration
  Vector v(cols), av(rows);
  std::mt19937_64 rng(0x7a3);
  std::normal_distribution<double> normal;
  for (auto& x : v) x = normal(rng);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    const double nv = norm(v);
    if (nv == 0.0) return 0.0;
    for (auto& x : v) x /= nv;
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * v[c];
      av[r] = acc;
    }
    Vector next(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) next[c] += w[r * cols + c] * av[r];
    const double nn = norm(next);
    const bool done = std::abs(nn - lambda) <= 1e-13 * nn;
    lambda = nn;
    v = std::move(next);
    if (done) break;
  }
  return std::sqrt(lambda);
}

struct Bounds {
  double bound;
  double regional;
  double radius;
  std::optional<std::string> unbounded;
};

inline Bounds sequence_bounds(const std::vector<Layer>& layers, double radius, const LipschitzOptions& opt,
                              std::vector<LayerBound>* trace, const std::string& prefix);

inline Bounds layer_bounds(const Layer& layer, double r_in, const LipschitzOptions& opt,
                           std::vector<LayerBound>* trace, const std::string& prefix) {
  const std::string name = prefix + layer.name;
  const double pad = 1.0 + opt.slack;
  const Tensor zero(layer.in_shape());
  auto offset_norm = [&] { return norm(layer.forward(zero).data); };
  Bounds b{1.0, 1.0, r_in, std::nullopt};

  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense> || std::is_same_v<T, Conv> || std::is_same_v<T, ConvTranspose> ||
                      std::is_same_v<T, AvgPool> || std::is_same_v<T, GlobalAvgPool> ||
                      std::is_same_v<T, Upsample> || std::is_same_v<T, SpectralNorm>) {
          b.bound = b.regional = affine_operator_norm(l, layer.in_shape(), opt.power_iterations) * pad;
          b.radius = offset_norm() + b.bound * r_in;
        } else if constexpr (std::is_same_v<T, BatchNorm>) {
          double s = 0.0;
          for (std::size_t c = 0; c < l.shape.c; ++c) s = std::max(s, std::abs(l.scale(c)));
          b.bound = b.regional = s;
          b.radius = offset_norm() + s * r_in;
        } else if constexpr (std::is_same_v<T, Reshape> || std::is_same_v<T, Flatten>) {
          b.radius = r_in;
        } else if constexpr (std::is_same_v<T, TanhLayer>) {
          b.radius = std::min(r_in, std::sqrt(static_cast<double>(l.shape.size())));
        } else if constexpr (std::is_same_v<T, Tlu>) {
          // |max(x, tau)| <= |x| + |tau|
          double t2 = 0.0;
          for (std::size_t c = 0; c < l.shape.c; ++c) t2 += l.tau[c] * l.tau[c] * static_cast<double>(l.shape.plane());
          b.radius = r_in + std::sqrt(t2);
        } else if constexpr (std::is_same_v<T, LeakyRelu>) {
          b.bound = b.regional = std::max(1.0, std::abs(l.slope[0]));
          b.radius = b.bound * r_in;
        } else if constexpr (std::is_same_v<T, Frn>) {
          double g = 0.0, cap2 = 0.0;
          for (std::size_t c = 0; c < l.shape.c; ++c) {
            g = std::max(g, std::abs(l.gamma[c]));
            const double m = std::abs(l.gamma[c]) + std::abs(l.beta[c]);
            cap2 += m * m * static_cast<double>(l.shape.plane());
          }
          const double eps = std::abs(l.eps[0]);
          b.bound = g / std::sqrt(eps);
          b.regional = opt.frn_energy_floor > 0.0 ? g / std::sqrt(opt.frn_energy_floor + eps) : b.bound;
          // each normalized channel has mean square <= 1
          b.radius = std::sqrt(cap2);
        } else if constexpr (std::is_same_v<T, SelfAttention>) {
          if (l.lambda[0] == 0.0) {
            b.radius = r_in;
            return;
          }
          if (!std::isfinite(r_in)) {
            b.unbounded = name;
            return;
          }
          const double nu = spectral_norm_of(l.wu, l.reduced, l.channels, opt.power_iterations) * pad;
          const double nv = spectral_norm_of(l.wv, l.reduced, l.channels, opt.power_iterations) * pad;
          const double ng = spectral_norm_of(l.wg, l.reduced, l.channels, opt.power_iterations) * pad;
          const double nphi = spectral_norm_of(l.wphi, l.channels, l.reduced, opt.power_iterations) * pad;
          const double n_loc = static_cast<double>(l.locations());
          // d(G Psi^T) = Wg dh Psi^T + Wg h dPsi^T, with ||Psi||_2 <= sqrt(N) (rows sum to 1)
          // and the row-softmax Jacobian norm <= 1/2.
          const double inner = ng * (std::sqrt(n_loc) + nu * nv * r_in * r_in);
          b.bound = b.regional = 1.0 + std::abs(l.lambda[0]) * nphi * inner;
          // ||o|| <= ||Wphi|| ||Wg|| ||h|| ||Psi||
          b.radius = r_in * (1.0 + std::abs(l.lambda[0]) * nphi * ng * std::sqrt(n_loc));
        } else if constexpr (std::is_same_v<T, Residual>) {
          const auto m = sequence_bounds(l.main, r_in, opt, trace, name + "/");
          const auto s = sequence_bounds(l.shortcut, r_in, opt, trace, name + "/sc/");
          if (m.unbounded) b.unbounded = m.unbounded;
          if (s.unbounded) b.unbounded = s.unbounded;
          b.bound = m.bound + s.bound;
          b.regional = m.regional + s.regional;
          b.radius = m.radius + s.radius;
        }
      },
      layer.op);

  if (trace) trace->push_back({name, layer.kind(), b.bound, b.regional, b.radius});
  return b;
}

inline Bounds sequence_bounds(const std::vector<Layer>& layers, double radius, const LipschitzOptions& opt,
                              std::vector<LayerBound>* trace, const std::string& prefix) {
  Bounds acc{1.0, 1.0, radius, std::nullopt};
  for (const auto& l : layers) {
    const auto b = layer_bounds(l, acc.radius, opt, trace, prefix);
    if (b.unbounded && !acc.unbounded) acc.unbounded = b.unbounded;
    acc.bound *= b.bound;
    acc.regional *= b.regional;
    acc.radius = b.radius;
  }
  return acc;
}

}  // namespace detail

inline LipschitzReport lipschitz_bound(const NetworkGraph& net, const LipschitzOptions& opt = {}) {
  LipschitzReport rep;
  const auto b = detail::sequence_bounds(net.layers, opt.input_radius, opt, &rep.layers, "");
  if (b.unbounded) {
    rep.bounded = false;
    rep.offending_layer = *b.unbounded;
    rep.bound = rep.regional_bound = std::numeric_limits<double>::infinity();
    rep.assumptions.push_back("layer '" + *b.unbounded + "' has no global bound; supply a finite input radius");
    return rep;
  }
  rep.bound = b.bound;
  rep.regional_bound = b.regional;
  if (std::isfinite(opt.input_radius))
    rep.assumptions.push_back("certified for inputs with norm <= " + std::to_string(opt.input_radius));
  if (opt.frn_energy_floor > 0.0)
    rep.assumptions.push_back("regional bound assumes mean(h^2) >= " + std::to_string(opt.frn_energy_floor) +
                              " at every FRN input");
  return rep;
}

}  // namespace latentmc::nn
