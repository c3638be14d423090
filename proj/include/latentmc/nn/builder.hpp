#pragma once

// Helpers for constructing networks in code: parameter initialization and the
// small reference architectures used by fixtures and tests.

#include <random>

#include "latentmc/forward/image.hpp"
#include "latentmc/nn/spectral.hpp"

namespace latentmc::nn {

namespace detail {

template <class Rng>
void fill_normal(Vector& v, double sd, Rng& rng, double mean = 0.0) {
  std::normal_distribution<double> normal(mean, sd);
  for (auto& x : v) x = normal(rng);
}

template <class Rng>
void randomize_op(LayerOp& op, Rng& rng);

template <class Rng>
void randomize_layers(std::vector<Layer>& layers, Rng& rng) {
  for (auto& l : layers) randomize_op(l.op, rng);
}

template <class Rng>
void randomize_op(LayerOp& op, Rng& rng) {
  std::visit(
      [&](auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense> || std::is_same_v<T, Conv> || std::is_same_v<T, ConvTranspose>) {
          fill_normal(l.weight, 1.0 / std::sqrt(static_cast<double>(l.matrix_cols())), rng);
          fill_normal(l.bias, 0.05, rng);
        } else if constexpr (std::is_same_v<T, Frn>) {
          fill_normal(l.gamma, 0.1, rng, 1.0);
          fill_normal(l.beta, 0.1, rng);
        } else if constexpr (std::is_same_v<T, Tlu>) {
          fill_normal(l.tau, 0.2, rng, -0.3);
        } else if constexpr (std::is_same_v<T, BatchNorm>) {
          fill_normal(l.mean, 0.1, rng);
          std::uniform_real_distribution<double> u(0.5, 1.5);
          for (auto& v : l.var) v = u(rng);
          fill_normal(l.gamma, 0.1, rng, 1.0);
          fill_normal(l.beta, 0.1, rng);
        } else if constexpr (std::is_same_v<T, SelfAttention>) {
          const double s = 1.0 / std::sqrt(static_cast<double>(l.channels));
          fill_normal(l.wu, s, rng);
          fill_normal(l.wv, s, rng);
          fill_normal(l.wg, s, rng);
          fill_normal(l.wphi, 1.0 / std::sqrt(static_cast<double>(l.reduced)), rng);
          l.lambda[0] = 0.5;
        } else if constexpr (std::is_same_v<T, SpectralNorm>) {
          LayerOp inner = std::visit([](auto& i) { return LayerOp(i); }, l.inner);
          randomize_op(inner, rng);
          std::visit(
              [&](auto& i) {
                using I = std::decay_t<decltype(i)>;
                i = std::get<I>(inner);
              },
              l.inner);
        } else if constexpr (std::is_same_v<T, Residual>) {
          randomize_layers(l.main, rng);
          randomize_layers(l.shortcut, rng);
        }
      },
      op);
}

}  // namespace detail

/// Random He-style initialization of every parameter, then spectral norms baked in.
template <class Rng>
void randomize(NetworkGraph& net, Rng& rng) {
  detail::randomize_layers(net.layers, rng);
  bake_spectral_norm(net);
}

/// Dense m -> side^2 followed by a reshape to a (1, side, side) image: G(z) = W z + b.
inline NetworkGraph linear_generator(const Matrix& weight, const Vector& bias, std::size_t side,
                                     bool spectral = false) {
  if (weight.rows != side * side) throw ShapeError("linear_generator: weight rows must equal side^2");
  if (bias.size() != weight.rows) throw ShapeError("linear_generator: bias length mismatch");
  const auto m = static_cast<std::uint32_t>(weight.cols);
  const auto s = static_cast<std::uint32_t>(side);
  Dense dense(Shape{m, 1, 1}, s * s);
  dense.weight = weight.values;
  dense.bias = bias;
  NetworkGraph net;
  net.role = NetworkRole::Generator;
  net.input_shape = {m, 1, 1};
  if (spectral)
    net.layers.emplace_back("fc", SpectralNorm(std::move(dense)));
  else
    net.layers.emplace_back("fc", std::move(dense));
  net.layers.emplace_back("to_image", Reshape(Shape{s * s, 1, 1}, Shape{1, s, s}));
  if (spectral) bake_spectral_norm(net);
  return net;
}

/// Encoder x (1, side, side) -> z (m): flatten + Dense.
inline NetworkGraph linear_encoder(const Matrix& weight, const Vector& bias, std::size_t side) {
  if (weight.cols != side * side) throw ShapeError("linear_encoder: weight cols must equal side^2");
  const auto s = static_cast<std::uint32_t>(side);
  Dense dense(Shape{s * s, 1, 1}, static_cast<std::uint32_t>(weight.rows));
  dense.weight = weight.values;
  dense.bias = bias;
  NetworkGraph net;
  net.role = NetworkRole::Encoder;
  net.input_shape = {1, s, s};
  net.layers.emplace_back("flatten", Flatten(net.input_shape));
  net.layers.emplace_back("fc", std::move(dense));
  return net;
}

/// Desk-scale generator following the staged layout
///   SN-ConvT(1x1 -> side/4) | ResBlockUp + SA-block | ResBlockUp + FRN + TLU + SN-ConvT
/// with a final affine map of tanh into [0, 1]. `side` must be divisible by 4.
template <class Rng>
NetworkGraph sa_generator(std::uint32_t latent_dim, std::uint32_t side, std::uint32_t channels, Rng& rng) {
  if (side % 4 != 0 || side < 4) throw ShapeError("sa_generator: side must be a positive multiple of 4");
  if (channels < 2 || channels % 2 != 0) throw ShapeError("sa_generator: channels must be even and >= 2");
  const std::uint32_t r0 = side / 4, c = channels, c2 = channels / 2;
  NetworkGraph net;
  net.role = NetworkRole::Generator;
  net.input_shape = {latent_dim, 1, 1};
  net.layers.emplace_back("stage1_convt", SpectralNorm(ConvTranspose(latent_dim, c, r0, 1, 0, 1, 1)));
  net.layers.emplace_back("stage2_resup", make_residual(LayerKind::ResBlockUp, c, c, r0, r0, true));
  net.layers.emplace_back("stage2_attn", SelfAttention(c, std::max<std::uint32_t>(1, c / 8), 2 * r0, 2 * r0));
  net.layers.emplace_back("stage3_resup", make_residual(LayerKind::ResBlockUp, c, c2, 2 * r0, 2 * r0, true));
  net.layers.emplace_back("stage3_frn", Frn(Shape{c2, side, side}));
  net.layers.emplace_back("stage3_tlu", Tlu(Shape{c2, side, side}));
  net.layers.emplace_back("stage3_convt", SpectralNorm(ConvTranspose(c2, 1, 3, 1, 1, side, side)));
  net.layers.emplace_back("out_tanh", TanhLayer(Shape{1, side, side}));
  randomize(net, rng);
  BatchNorm to_unit(Shape{1, side, side});
  to_unit.mean = {0.0};
  to_unit.var = {4.0 - to_unit.eps[0]};  // scale 1/2
  to_unit.gamma = {1.0};
  to_unit.beta = {0.5};
  net.layers.emplace_back("out_unit", std::move(to_unit));
  return net;
}

/// Desk-scale encoder: Conv+FRN+TLU+Pool | ResBlockDown | FRN+TLU+Conv -> (m, 1, 1).
template <class Rng>
NetworkGraph sa_encoder(std::uint32_t side, std::uint32_t channels, std::uint32_t latent_dim, Rng& rng) {
  if (side % 4 != 0 || side < 4) throw ShapeError("sa_encoder: side must be a positive multiple of 4");
  const std::uint32_t h1 = side / 2, h2 = side / 4;
  NetworkGraph net;
  net.role = NetworkRole::Encoder;
  net.input_shape = {1, side, side};
  net.layers.emplace_back("stage1_conv", Conv(1, channels, 3, 1, 1, side, side));
  net.layers.emplace_back("stage1_frn", Frn(Shape{channels, side, side}));
  net.layers.emplace_back("stage1_tlu", Tlu(Shape{channels, side, side}));
  net.layers.emplace_back("stage1_pool", AvgPool(Shape{channels, side, side}, 2));
  net.layers.emplace_back("stage2_resdown", make_residual(LayerKind::ResBlockDown, channels, channels, h1, h1, false));
  net.layers.emplace_back("stage3_frn", Frn(Shape{channels, h2, h2}));
  net.layers.emplace_back("stage3_tlu", Tlu(Shape{channels, h2, h2}));
  net.layers.emplace_back("stage3_conv", Conv(channels, latent_dim, h2, 1, 0, h2, h2));
  randomize(net, rng);
  return net;
}

}  // namespace latentmc::nn
