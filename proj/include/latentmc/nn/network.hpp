#pragma once

#include <memory>
#include <optional>
#include <variant>

#include "latentmc/nn/layers.hpp"

namespace latentmc::nn {

/// A linear layer whose weight has been divided by its spectral norm at export.
/// `u` is the cached left singular vector from the power iteration.
struct SpectralNorm {
  std::variant<Dense, Conv, ConvTranspose> inner;
  Vector u;

  SpectralNorm() = default;
  template <class L>
  explicit SpectralNorm(L layer) : inner(std::move(layer)) {
    u.assign(matrix_rows(), 0.0);
  }

  LayerKind inner_kind() const {
    return std::visit(
        [](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Dense>) return LayerKind::Dense;
          else if constexpr (std::is_same_v<T, Conv>) return LayerKind::Conv;
          else return LayerKind::ConvTranspose;
        },
        inner);
  }
  std::size_t matrix_rows() const { return std::visit([](const auto& l) { return l.matrix_rows(); }, inner); }
  std::size_t matrix_cols() const { return std::visit([](const auto& l) { return l.matrix_cols(); }, inner); }
  Vector& weight() { return std::visit([](auto& l) -> Vector& { return l.weight; }, inner); }
  const Vector& weight() const { return std::visit([](const auto& l) -> const Vector& { return l.weight; }, inner); }

  Shape in_shape() const {
    return std::visit(
        [](const auto& l) {
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, Dense>) return l.in;
          else return l.in_shape();
        },
        inner);
  }
  Shape out_shape() const { return std::visit([](const auto& l) { return l.out_shape(); }, inner); }
  Tensor forward(const Tensor& x) const { return std::visit([&](const auto& l) { return l.forward(x); }, inner); }
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy) const {
    return std::visit([&](const auto& l) { return l.backward(x, y, gy); }, inner);
  }
  std::vector<Vector*> params() {
    auto p = std::visit([](auto& l) { return l.params(); }, inner);
    p.push_back(&u);
    return p;
  }
  std::vector<const Vector*> params() const {
    auto p = std::visit([](const auto& l) { return l.params(); }, inner);
    p.push_back(&u);
    return p;
  }
};

struct Layer;

/// y = main(x) + shortcut(x); an empty shortcut is the identity.
/// Produced by expanding the ResBlock/ResBlockUp/ResBlockDown composites.
struct Residual {
  LayerKind origin = LayerKind::ResBlock;
  std::uint32_t cin = 0, cout = 0, h = 0, w = 0;
  bool spectral = false;
  std::vector<Layer> main;
  std::vector<Layer> shortcut;

  Shape in_shape() const { return {cin, h, w}; }
  Shape out_shape() const;
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy) const;
  std::vector<Vector*> params();
  std::vector<const Vector*> params() const;
};

using LayerOp = std::variant<Dense, Conv, ConvTranspose, Frn, Tlu, LeakyRelu, TanhLayer, BatchNorm, AvgPool,
                             GlobalAvgPool, SelfAttention, Upsample, Reshape, Flatten, SpectralNorm, Residual>;

struct Layer {
  std::string name;
  LayerOp op;

  template <class Op>
  Layer(std::string n, Op o) : name(std::move(n)), op(std::move(o)) {}

  LayerKind kind() const {
    return std::visit(
        [](const auto& l) -> LayerKind {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Dense>) return LayerKind::Dense;
          else if constexpr (std::is_same_v<T, Conv>) return LayerKind::Conv;
          else if constexpr (std::is_same_v<T, ConvTranspose>) return LayerKind::ConvTranspose;
          else if constexpr (std::is_same_v<T, Frn>) return LayerKind::FRN;
          else if constexpr (std::is_same_v<T, Tlu>) return LayerKind::TLU;
          else if constexpr (std::is_same_v<T, LeakyRelu>) return LayerKind::LeakyReLU;
          else if constexpr (std::is_same_v<T, TanhLayer>) return LayerKind::Tanh;
          else if constexpr (std::is_same_v<T, BatchNorm>) return LayerKind::BatchNormInference;
          else if constexpr (std::is_same_v<T, AvgPool>) return LayerKind::AvgPool;
          else if constexpr (std::is_same_v<T, GlobalAvgPool>) return LayerKind::GlobalAvgPool;
          else if constexpr (std::is_same_v<T, SelfAttention>) return LayerKind::SelfAttention;
          else if constexpr (std::is_same_v<T, Upsample>) return LayerKind::Upsample;
          else if constexpr (std::is_same_v<T, Flatten>) return LayerKind::Flatten;
          else if constexpr (std::is_same_v<T, Reshape>) return LayerKind::Reshape;
          else if constexpr (std::is_same_v<T, SpectralNorm>) return LayerKind::SpectralNormWrapper;
          else return l.origin;
        },
        op);
  }
  Shape in_shape() const {
    return std::visit(
        [](const auto& l) {
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, Dense>) return l.in;
          else return l.in_shape();
        },
        op);
  }
  Shape out_shape() const { return std::visit([](const auto& l) { return l.out_shape(); }, op); }
  Tensor forward(const Tensor& x) const { return std::visit([&](const auto& l) { return l.forward(x); }, op); }
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy) const {
    return std::visit([&](const auto& l) { return l.backward(x, y, gy); }, op);
  }
  std::vector<Vector*> params() { return std::visit([](auto& l) { return l.params(); }, op); }
  std::vector<const Vector*> params() const { return std::visit([](const auto& l) { return l.params(); }, op); }
};

namespace detail {

/// Runs a layer sequence, recording every activation (acts[0] = input).
inline std::vector<Tensor> run_recorded(const std::vector<Layer>& layers, const Tensor& x) {
  std::vector<Tensor> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(x);
  for (const auto& l : layers) acts.push_back(l.forward(acts.back()));
  return acts;
}

inline Tensor run(const std::vector<Layer>& layers, Tensor x) {
  for (const auto& l : layers) x = l.forward(x);
  return x;
}

inline Tensor backprop(const std::vector<Layer>& layers, const std::vector<Tensor>& acts, Tensor g) {
  for (std::size_t i = layers.size(); i-- > 0;) g = layers[i].backward(acts[i], acts[i + 1], g);
  return g;
}

}  // namespace detail

inline Shape Residual::out_shape() const { return main.empty() ? in_shape() : main.back().out_shape(); }

inline Tensor Residual::forward(const Tensor& x) const {
  Tensor y = detail::run(main, x);
  const Tensor s = detail::run(shortcut, x);
  if (s.shape != y.shape) throw ShapeError("Residual: branch shapes differ");
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += s.data[i];
  return y;
}

inline Tensor Residual::backward(const Tensor& x, const Tensor&, const Tensor& gy) const {
  Tensor gx = detail::backprop(main, detail::run_recorded(main, x), gy);
  const Tensor gs = detail::backprop(shortcut, detail::run_recorded(shortcut, x), gy);
  for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += gs.data[i];
  return gx;
}

inline std::vector<Vector*> Residual::params() {
  std::vector<Vector*> p;
  for (auto* seq : {&main, &shortcut})
    for (auto& l : *seq)
      for (auto* v : l.params()) p.push_back(v);
  return p;
}

inline std::vector<const Vector*> Residual::params() const {
  std::vector<const Vector*> p;
  for (const auto* seq : {&main, &shortcut})
    for (const auto& l : *seq)
      for (const auto* v : l.params()) p.push_back(v);
  return p;
}

/// Expands a residual composite into primitives.
///   ResBlock:     FRN-TLU-Conv3-FRN-TLU-Conv3          | identity or Conv1
///   ResBlockUp:   FRN-TLU-Up2-Conv3-FRN-TLU-Conv3      | Up2-Conv1
///   ResBlockDown: FRN-TLU-Conv3-FRN-TLU-Conv3-AvgPool2 | Conv1-AvgPool2
/// With `spectral`, every convolution is wrapped in SpectralNorm.
inline Residual make_residual(LayerKind origin, std::uint32_t cin, std::uint32_t cout, std::uint32_t h,
                              std::uint32_t w, bool spectral) {
  if (origin != LayerKind::ResBlock && origin != LayerKind::ResBlockUp && origin != LayerKind::ResBlockDown)
    throw ShapeError("make_residual: not a residual kind");
  Residual r;
  r.origin = origin;
  r.cin = cin;
  r.cout = cout;
  r.h = h;
  r.w = w;
  r.spectral = spectral;
  auto conv = [&](std::uint32_t ci, std::uint32_t co, std::uint32_t k, std::uint32_t hh, std::uint32_t ww,
                  const std::string& name) {
    Conv c(ci, co, k, 1, k / 2, hh, ww);
    return spectral ? Layer(name, SpectralNorm(std::move(c))) : Layer(name, std::move(c));
  };
  const std::uint32_t h2 = origin == LayerKind::ResBlockUp ? 2 * h : h;
  const std::uint32_t w2 = origin == LayerKind::ResBlockUp ? 2 * w : w;

  r.main.emplace_back("frn1", Frn(Shape{cin, h, w}));
  r.main.emplace_back("tlu1", Tlu(Shape{cin, h, w}));
  if (origin == LayerKind::ResBlockUp) r.main.emplace_back("up", Upsample(Shape{cin, h, w}, 2));
  r.main.push_back(conv(cin, cout, 3, h2, w2, "conv1"));
  r.main.emplace_back("frn2", Frn(Shape{cout, h2, w2}));
  r.main.emplace_back("tlu2", Tlu(Shape{cout, h2, w2}));
  r.main.push_back(conv(cout, cout, 3, h2, w2, "conv2"));
  if (origin == LayerKind::ResBlockDown) r.main.emplace_back("pool", AvgPool(Shape{cout, h, w}, 2));

  if (origin == LayerKind::ResBlockUp) {
    r.shortcut.emplace_back("sc_up", Upsample(Shape{cin, h, w}, 2));
    r.shortcut.push_back(conv(cin, cout, 1, h2, w2, "sc_conv"));
  } else if (origin == LayerKind::ResBlockDown) {
    r.shortcut.push_back(conv(cin, cout, 1, h, w, "sc_conv"));
    r.shortcut.emplace_back("sc_pool", AvgPool(Shape{cout, h, w}, 2));
  } else if (cin != cout) {
    r.shortcut.push_back(conv(cin, cout, 1, h, w, "sc_conv"));
  }
  return r;
}

enum class NetworkRole : std::uint8_t { Generator = 0, Encoder = 1 };

/// An ordered, immutable-after-load layer list evaluable forward and in reverse.
struct NetworkGraph {
  NetworkRole role = NetworkRole::Generator;
  Shape input_shape;
  std::vector<Layer> layers;

  Shape output_shape() const { return layers.empty() ? input_shape : layers.back().out_shape(); }

  /// Throws ShapeError when adjacent layers do not chain.
  void validate_shapes() const {
    Shape s = input_shape;
    for (const auto& l : layers) {
      if (l.in_shape() != s)
        throw ShapeError("layer '" + l.name + "' (" + kind_name(l.kind()) + ") expects " + l.in_shape().str() +
                         " but receives " + s.str());
      s = l.out_shape();
    }
  }
};

/// x~ = G(z) or z~ = E(x).
inline Tensor forward(const NetworkGraph& net, const Tensor& input) {
  if (input.shape != net.input_shape)
    throw ShapeError("forward: input " + input.shape.str() + " does not match network input " +
                     net.input_shape.str());
  return detail::run(net.layers, input);
}

inline Vector forward(const NetworkGraph& net, std::span<const double> input) {
  return forward(net, Tensor(net.input_shape, Vector(input.begin(), input.end()))).data;
}

/// Index of the first layer whose output is non-finite, if any.
inline std::optional<std::size_t> first_nonfinite_layer(const NetworkGraph& net, const Tensor& input) {
  Tensor x = input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    x = net.layers[i].forward(x);
    if (!all_finite(x.data)) return i;
  }
  return std::nullopt;
}

/// J^T * cotangent, with J the Jacobian of forward(net, .) at `input`.
inline Tensor vjp(const NetworkGraph& net, const Tensor& input, const Tensor& cotangent) {
  if (input.shape != net.input_shape) throw ShapeError("vjp: input shape mismatch");
  if (cotangent.size() != net.output_shape().size()) throw ShapeError("vjp: cotangent shape mismatch");
  const auto acts = detail::run_recorded(net.layers, input);
  return detail::backprop(net.layers, acts, Tensor(net.output_shape(), cotangent.data));
}

/// Forward value and vjp sharing one recorded forward pass.
struct ForwardVjp {
  Vector output;
  Vector gradient;
};

inline Tensor forward_recorded(const NetworkGraph& net, const Tensor& input, std::vector<Tensor>& acts) {
  if (input.shape != net.input_shape) throw ShapeError("forward: input shape mismatch");
  acts = detail::run_recorded(net.layers, input);
  return acts.back();
}

inline Tensor vjp_recorded(const NetworkGraph& net, const std::vector<Tensor>& acts, std::span<const double> cot) {
  return detail::backprop(net.layers, acts, Tensor(net.output_shape(), Vector(cot.begin(), cot.end())));
}

}  // namespace latentmc::nn
