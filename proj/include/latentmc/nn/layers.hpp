#pragma once

// Primitive layers of the generator/encoder runtime. Every layer provides
//   forward(x)            -> y
//   backward(x, y, gy)    -> gx = J(x)^T gy
// plus its declared input/output shapes and an ordered list of parameter
// tensors (the serialization order).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "latentmc/nn/tensor.hpp"

namespace latentmc::nn {

enum class LayerKind : std::uint16_t {
  Dense = 1,
  Conv = 2,
  ConvTranspose = 3,
  FRN = 4,
  TLU = 5,
  LeakyReLU = 6,
  Tanh = 7,
  BatchNormInference = 8,
  AvgPool = 9,
  GlobalAvgPool = 10,
  SelfAttention = 11,
  ResBlockUp = 12,
  ResBlockDown = 13,
  ResBlock = 14,
  SpectralNormWrapper = 15,
  Flatten = 16,
  Reshape = 17,
  Upsample = 18,
};

inline std::string kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "Dense";
    case LayerKind::Conv: return "Conv";
    case LayerKind::ConvTranspose: return "ConvTranspose";
    case LayerKind::FRN: return "FRN";
    case LayerKind::TLU: return "TLU";
    case LayerKind::LeakyReLU: return "LeakyReLU";
    case LayerKind::Tanh: return "Tanh";
    case LayerKind::BatchNormInference: return "BatchNormInference";
    case LayerKind::AvgPool: return "AvgPool";
    case LayerKind::GlobalAvgPool: return "GlobalAvgPool";
    case LayerKind::SelfAttention: return "SelfAttention";
    case LayerKind::ResBlockUp: return "ResBlockUp";
    case LayerKind::ResBlockDown: return "ResBlockDown";
    case LayerKind::ResBlock: return "ResBlock";
    case LayerKind::SpectralNormWrapper: return "SpectralNormWrapper";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Reshape: return "Reshape";
    case LayerKind::Upsample: return "Upsample";
  }
  return "Unknown(" + std::to_string(static_cast<int>(k)) + ")";
}

namespace detail {
inline void expect_shape(const Tensor& t, const Shape& s, const char* who) {
  if (t.shape != s)
    throw ShapeError(std::string(who) + ": expected input " + s.str() + ", got " + t.shape.str());
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Linear maps

/// Fully connected layer on the flattened input; output shape (out, 1, 1).
struct Dense {
  Shape in;
  std::uint32_t out_features = 0;
  Vector weight;  // out x in, row-major
  Vector bias;    // out

  Dense() = default;
  Dense(Shape in_shape, std::uint32_t out)
      : in(in_shape), out_features(out), weight(in_shape.size() * out, 0.0), bias(out, 0.0) {}

  std::size_t in_features() const { return in.size(); }
  Shape out_shape() const { return {out_features, 1, 1}; }
  std::size_t matrix_rows() const { return out_features; }
  std::size_t matrix_cols() const { return in_features(); }

  Tensor forward(const Tensor& x) const {
    if (x.size() != in_features()) throw ShapeError("Dense: input size mismatch, got " + x.shape.str());
    Tensor y(out_shape());
    const std::size_t n = in_features();
    for (std::size_t o = 0; o < out_features; ++o) {
      double acc = bias[o];
      const double* w = weight.data() + o * n;
      for (std::size_t i = 0; i < n; ++i) acc += w[i] * x.data[i];
      y.data[o] = acc;
    }
    return y;
  }
  Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy) const {
    Tensor gx(x.shape);
    const std::size_t n = in_features();
    for (std::size_t o = 0; o < out_features; ++o) {
      const double g = gy.data[o];
      if (g == 0.0) continue;
      const double* w = weight.data() + o * n;
      for (std::size_t i = 0; i < n; ++i) gx.data[i] += w[i] * g;
    }
    return gx;
  }
  std::vector<Vector*> params() { return {&weight, &bias}; }
  std::vector<const Vector*> params() const { return {&weight, &bias}; }
};

/// 2-D cross-correlation with square kernel, zero padding.
struct Conv {
  std::uint32_t cin = 0, cout = 0, kernel = 3, stride = 1, pad = 1, h = 0, w = 0;
  Vector weight;  // cout x cin x k x k
  Vector bias;    // cout

  Conv() = default;
  Conv(std::uint32_t ci, std::uint32_t co, std::uint32_t k, std::uint32_t s, std::uint32_t p,
       std::uint32_t hh, std::uint32_t ww)
      : cin(ci), cout(co), kernel(k), stride(s), pad(p), h(hh), w(ww),
        weight(static_cast<std::size_t>(co) * ci * k * k, 0.0), bias(co, 0.0) {
    if (s == 0 || k == 0) throw ShapeError("Conv: kernel and stride must be positive");
    if (hh + 2 * p < k || ww + 2 * p < k) throw ShapeError("Conv: kernel larger than padded input");
  }

  Shape in_shape() const { return {cin, h, w}; }
  Shape out_shape() const {
    return {cout, (h + 2 * pad - kernel) / stride + 1, (w + 2 * pad - kernel) / stride + 1};
  }
  std::size_t matrix_rows() const { return cout; }
  std::size_t matrix_cols() const { return static_cast<std::size_t>(cin) * kernel * kernel; }

  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, in_shape(), "Conv");
    const Shape os = out_shape();
    Tensor y(os);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t oy = 0; oy < os.h; ++oy)
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          double acc = bias[co];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < kernel; ++ky) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t kx = 0; kx < kernel; ++kx) {
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                acc += weight[((co * cin + ci) * kernel + ky) * kernel + kx] *
                       x.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
            }
          y.at(co, oy, ox) = acc;
        }
    return y;
  }
  Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy) const {
    const Shape os = out_shape();
    Tensor gx(x.shape);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t oy = 0; oy < os.h; ++oy)
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          const double g = gy.at(co, oy, ox);
          if (g == 0.0) continue;
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < kernel; ++ky) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t kx = 0; kx < kernel; ++kx) {
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                gx.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                    weight[((co * cin + ci) * kernel + ky) * kernel + kx] * g;
              }
            }
        }
    return gx;
  }
  std::vector<Vector*> params() { return {&weight, &bias}; }
  std::vector<const Vector*> params() const { return {&weight, &bias}; }
};

/// Transposed convolution (the adjoint of Conv's linear part) plus bias.
struct ConvTranspose {
  std::uint32_t cin = 0, cout = 0, kernel = 4, stride = 2, pad = 1, h = 0, w = 0;
  Vector weight;  // cin x cout x k x k
  Vector bias;    // cout

  ConvTranspose() = default;
  ConvTranspose(std::uint32_t ci, std::uint32_t co, std::uint32_t k, std::uint32_t s, std::uint32_t p,
                std::uint32_t hh, std::uint32_t ww)
      : cin(ci), cout(co), kernel(k), stride(s), pad(p), h(hh), w(ww),
        weight(static_cast<std::size_t>(ci) * co * k * k, 0.0), bias(co, 0.0) {
    if (s == 0 || k == 0) throw ShapeError("ConvTranspose: kernel and stride must be positive");
    if ((hh - 1) * s + k <= 2 * p || (ww - 1) * s + k <= 2 * p)
      throw ShapeError("ConvTranspose: padding removes the whole output");
  }

  Shape in_shape() const { return {cin, h, w}; }
  Shape out_shape() const {
    return {cout, (h - 1) * stride + kernel - 2 * pad, (w - 1) * stride + kernel - 2 * pad};
  }
  std::size_t matrix_rows() const { return cin; }
  std::size_t matrix_cols() const { return static_cast<std::size_t>(cout) * kernel * kernel; }

  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, in_shape(), "ConvTranspose");
    const Shape os = out_shape();
    Tensor y(os);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t i = 0; i < os.plane(); ++i) y.data[co * os.plane() + i] = bias[co];
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix) {
          const double v = x.at(ci, iy, ix);
          if (v == 0.0) continue;
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ky = 0; ky < kernel; ++ky) {
              const long oy = static_cast<long>(iy * stride + ky) - static_cast<long>(pad);
              if (oy < 0 || oy >= static_cast<long>(os.h)) continue;
              for (std::size_t kx = 0; kx < kernel; ++kx) {
                const long ox = static_cast<long>(ix * stride + kx) - static_cast<long>(pad);
                if (ox < 0 || ox >= static_cast<long>(os.w)) continue;
                y.at(co, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox)) +=
                    weight[((ci * cout + co) * kernel + ky) * kernel + kx] * v;
              }
            }
        }
    return y;
  }
  Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy) const {
    const Shape os = out_shape();
    Tensor gx(x.shape);
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix) {
          double acc = 0.0;
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ky = 0; ky < kernel; ++ky) {
              const long oy = static_cast<long>(iy * stride + ky) - static_cast<long>(pad);
              if (oy < 0 || oy >= static_cast<long>(os.h)) continue;
              for (std::size_t kx = 0; kx < kernel; ++kx) {
                const long ox = static_cast<long>(ix * stride + kx) - static_cast<long>(pad);
                if (ox < 0 || ox >= static_cast<long>(os.w)) continue;
                acc += weight[((ci * cout + co) * kernel + ky) * kernel + kx] *
                       gy.at(co, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox));
              }
            }
          gx.at(ci, iy, ix) = acc;
        }
    return gx;
  }
  std::vector<Vector*> params() { return {&weight, &bias}; }
  std::vector<const Vector*> params() const { return {&weight, &bias}; }
};

// ---------------------------------------------------------------------------
// Normalization and activations

/// Filter response normalization: per channel h / sqrt(mean(h^2) + eps), then gamma, beta.
struct Frn {
  Shape shape;
  Vector gamma, beta;
  Vector eps{1e-6};  // single learnable scalar, stored as a one-element tensor

  Frn() = default;
  explicit Frn(Shape s) : shape(s), gamma(s.c, 1.0), beta(s.c, 0.0) {}

  Shape in_shape() const { return shape; }
  Shape out_shape() const { return shape; }

  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, shape, "FRN");
    Tensor y(shape);
    const std::size_t n = shape.plane();
    for (std::size_t c = 0; c < shape.c; ++c) {
      const double* xc = x.data.data() + c * n;
      double ms = 0.0;
      for (std::size_t i = 0; i < n; ++i) ms += xc[i] * xc[i];
      const double inv = 1.0 / std::sqrt(ms / static_cast<double>(n) + std::abs(eps[0]));
      for (std::size_t i = 0; i < n; ++i) y.data[c * n + i] = gamma[c] * xc[i] * inv + beta[c];
    }
    return y;
  }
  Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy) const {
    Tensor gx(shape);
    const std::size_t n = shape.plane();
    for (std::size_t c = 0; c < shape.c; ++c) {
      const double* xc = x.data.data() + c * n;
      const double* gc = gy.data.data() + c * n;
      double ms = 0.0;
      for (std::size_t i = 0; i < n; ++i) ms += xc[i] * xc[i];
      const double inv = 1.0 / std::sqrt(ms / static_cast<double>(n) + std::abs(eps[0]));
      double proj = 0.0;  // mean(g * xhat)
      for (std::size_t i = 0; i < n; ++i) proj += gc[i] * xc[i] * inv;
      proj /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) gx.data[c * n + i] = gamma[c] * inv * (gc[i] - xc[i] * inv * proj);
    }
    return gx;
  }
  std::vector<Vector*> params() { return {&gamma, &beta, &eps}; }
  std::vector<const Vector*> params() const { return {&gamma, &beta, &eps}; }
};

/// Thresholded linear unit: max(h, tau_c).
struct Tlu {
  Shape shape;
  Vector tau;

  Tlu() = default;
  explicit Tlu(Shape s) : shape(s), tau(s.c, 0.0) {}

  Shape in_shape() const { return shape; }
  Shape out_shape() const { return shape; }

  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, shape, "TLU");
    Tensor y(shape);
    const std::size_t n = shape.plane();
    for (std::size_t c = 0; c < shape.c; ++c)
      for (std::size_t i = 0; i < n; ++i) y.data[c * n + i] = std::max(x.data[c * n + i], tau[c]);
    return y;
  }
  Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy) const {
    Tensor gx(shape);
    const std::size_t n = shape.plane();
    for (std::size_t c = 0; c < shape.c; ++c)
      for (std::size_t i = 0; i < n; ++i)
        gx.data[c * n + i] = x.data[c * n + i] > tau[c] ? gy.data[c * n + i] : 0.0;
    return gx;
  }
  std::vector<Vector*> params() { return {&tau}; }
  std::vector<const Vector*> params() const { return {&tau}; }
};

struct LeakyRelu {
  Shape shape;
  Vector slope{0.2};

  LeakyRelu() = default;
  explicit LeakyRelu(Shape s, double a = 0.2) : shape(s), slope{a} {}

  Shape in_shape() const { return shape; }
  Shape out_shape() const { return shape; }
  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, shape, "LeakyReLU");
    Tensor y(shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : slope[0] * x.data[i];
    return y;
  }
  Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy) const {
    Tensor gx(shape);
    for (std::size_t i = 0; i < x.size(); ++i) gx.data[i] = x.data[i] > 0.0 ? gy.data[i] : slope[0] * gy.data[i];
    return gx;
  }
  std::vector<Vector*> params() { return {&slope}; }
  std::vector<const Vector*> params() const { return {&slope}; }
};

struct TanhLayer {
  Shape shape;

  TanhLayer() = default;
  explicit TanhLayer(Shape s) : shape(s) {}

  Shape in_shape() const { return shape; }
  Shape out_shape() const { return shape; }
  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, shape, "Tanh");
    Tensor y(shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = std::tanh(x.data[i]);
    return y;
  }
  Tensor backward(const Tensor&, const Tensor& y, const Tensor& gy) const {
    Tensor gx(shape);
    for (std::size_t i = 0; i < y.size(); ++i) gx.data[i] = gy.data[i] * (1.0 - y.data[i] * y.data[i]);
    return gx;
  }
  std::vector<Vector*> params() { return {}; }
  std::vector<const Vector*> params() const { return {}; }
};

/// Batch normalization with frozen running statistics (a per-channel affine map).
struct BatchNorm {
  Shape shape;
  Vector mean, var, gamma, beta;
  Vector eps{1e-5};

  BatchNorm() = default;
  explicit BatchNorm(Shape s) : shape(s), mean(s.c, 0.0), var(s.c, 1.0), gamma(s.c, 1.0), beta(s.c, 0.0) {}

  Shape in_shape() const { return shape; }
  Shape out_shape() const { return shape; }
  double scale(std::size_t c) const { return gamma[c] / std::sqrt(var[c] + eps[0]); }

  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, shape, "BatchNormInference");
    Tensor y(shape);
    const std::size_t n = shape.plane();
    for (std::size_t c = 0; c < shape.c; ++c) {
      const double s = scale(c);
      for (std::size_t i = 0; i < n; ++i) y.data[c * n + i] = s * (x.data[c * n + i] - mean[c]) + beta[c];
    }
    return y;
  }
  Tensor backward(const Tensor&, const Tensor&, const Tensor& gy) const {
    Tensor gx(shape);
    const std::size_t n = shape.plane();
    for (std::size_t c = 0; c < shape.c; ++c) {
      const double s = scale(c);
      for (std::size_t i = 0; i < n; ++i) gx.data[c * n + i] = s * gy.data[c * n + i];
    }
    return gx;
  }
  std::vector<Vector*> params() { return {&mean, &var, &gamma, &beta, &eps}; }
  std::vector<const Vector*> params() const { return {&mean, &var, &gamma, &beta, &eps}; }
};

// ---------------------------------------------------------------------------
// Resampling and reshaping

struct AvgPool {
  Shape shape;
  std::uint32_t factor = 2;

  AvgPool() = default;
  AvgPool(Shape s, std::uint32_t k) : shape(s), factor(k) {
    if (k == 0 || s.h % k != 0 || s.w % k != 0) throw ShapeError("AvgPool: spatial dims must be divisible by factor");
  }
  Shape in_shape() const { return shape; }
  Shape out_shape() const { return {shape.c, shape.h / factor, shape.w / factor}; }

  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, shape, "AvgPool");
    const Shape os = out_shape();
    Tensor y(os);
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t c = 0; c < shape.c; ++c)
      for (std::size_t iy = 0; iy < shape.h; ++iy)
        for (std::size_t ix = 0; ix < shape.w; ++ix) y.at(c, iy / factor, ix / factor) += x.at(c, iy, ix) * inv;
    return y;
  }
  Tensor backward(const Tensor&, const Tensor&, const Tensor& gy) const {
    Tensor gx(shape);
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t c = 0; c < shape.c; ++c)
      for (std::size_t iy = 0; iy < shape.h; ++iy)
        for (std::size_t ix = 0; ix < shape.w; ++ix) gx.at(c, iy, ix) = gy.at(c, iy / factor, ix / factor) * inv;
    return gx;
  }
  std::vector<Vector*> params() { return {}; }
  std::vector<const Vector*> params() const { return {}; }
};

struct GlobalAvgPool {
  Shape shape;

  GlobalAvgPool() = default;
  explicit GlobalAvgPool(Shape s) : shape(s) {}
  Shape in_shape() const { return shape; }
  Shape out_shape() const { return {shape.c, 1, 1}; }

  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, shape, "GlobalAvgPool");
    Tensor y(out_shape());
    const std::size_t n = shape.plane();
    for (std::size_t c = 0; c < shape.c; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += x.data[c * n + i];
      y.data[c] = acc / static_cast<double>(n);
    }
    return y;
  }
  Tensor backward(const Tensor&, const Tensor&, const Tensor& gy) const {
    Tensor gx(shape);
    const std::size_t n = shape.plane();
    for (std::size_t c = 0; c < shape.c; ++c)
      for (std::size_t i = 0; i < n; ++i) gx.data[c * n + i] = gy.data[c] / static_cast<double>(n);
    return gx;
  }
  std::vector<Vector*> params() { return {}; }
  std::vector<const Vector*> params() const { return {}; }
};

/// Nearest-neighbour upsampling by an integer factor.
struct Upsample {
  Shape shape;
  std::uint32_t factor = 2;

  Upsample() = default;
  Upsample(Shape s, std::uint32_t f) : shape(s), factor(f) {
    if (f == 0) throw ShapeError("Upsample: factor must be positive");
  }
  Shape in_shape() const { return shape; }
  Shape out_shape() const { return {shape.c, shape.h * factor, shape.w * factor}; }

  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, shape, "Upsample");
    const Shape os = out_shape();
    Tensor y(os);
    for (std::size_t c = 0; c < os.c; ++c)
      for (std::size_t oy = 0; oy < os.h; ++oy)
        for (std::size_t ox = 0; ox < os.w; ++ox) y.at(c, oy, ox) = x.at(c, oy / factor, ox / factor);
    return y;
  }
  Tensor backward(const Tensor&, const Tensor&, const Tensor& gy) const {
    const Shape os = out_shape();
    Tensor gx(shape);
    for (std::size_t c = 0; c < os.c; ++c)
      for (std::size_t oy = 0; oy < os.h; ++oy)
        for (std::size_t ox = 0; ox < os.w; ++ox) gx.at(c, oy / factor, ox / factor) += gy.at(c, oy, ox);
    return gx;
  }
  std::vector<Vector*> params() { return {}; }
  std::vector<const Vector*> params() const { return {}; }
};

/// Reinterprets the data with a new shape of equal size. Flatten is Reshape to (n,1,1).
struct Reshape {
  Shape from, to;

  Reshape() = default;
  Reshape(Shape f, Shape t) : from(f), to(t) {
    if (f.size() != t.size()) throw ShapeError("Reshape: " + f.str() + " -> " + t.str() + " changes size");
  }
  Shape in_shape() const { return from; }
  Shape out_shape() const { return to; }
  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, from, "Reshape");
    return Tensor(to, x.data);
  }
  Tensor backward(const Tensor&, const Tensor&, const Tensor& gy) const { return Tensor(from, gy.data); }
  std::vector<Vector*> params() { return {}; }
  std::vector<const Vector*> params() const { return {}; }
};

struct Flatten : Reshape {
  Flatten() = default;
  explicit Flatten(Shape s) : Reshape(s, Shape{static_cast<std::uint32_t>(s.size()), 1, 1}) {}
};

// ---------------------------------------------------------------------------
// Self-attention

/// Attention over the N = H*W locations of a C-channel map, with 1x1 projections
/// u = Wu h, v = Wv h, g = Wg h (Cbar x C) and phi = Wphi (C x Cbar).
/// s_ij = u(h_i)^T v(h_j); the weights psi_{j,i} are a softmax over i for each j;
/// o_j = Wphi sum_i psi_{j,i} g(h_i); output = lambda * o + h.
struct SelfAttention {
  std::uint32_t channels = 0, reduced = 0, h = 0, w = 0;
  Vector wu, wv, wg;  // reduced x channels
  Vector wphi;        // channels x reduced
  Vector lambda{0.0};

  SelfAttention() = default;
  SelfAttention(std::uint32_t c, std::uint32_t cbar, std::uint32_t hh, std::uint32_t ww)
      : channels(c), reduced(cbar), h(hh), w(ww),
        wu(static_cast<std::size_t>(c) * cbar, 0.0), wv(wu), wg(wu), wphi(wu) {
    if (c == 0 || cbar == 0 || cbar > c) throw ShapeError("SelfAttention: need 0 < Cbar <= C");
  }

  Shape in_shape() const { return {channels, h, w}; }
  Shape out_shape() const { return in_shape(); }
  std::size_t locations() const { return static_cast<std::size_t>(h) * w; }

  struct Intermediates {
    Vector u, v, g;  // Cbar x N
    Vector psi;      // N x N, row j = softmax over i
    Vector mixed;    // Cbar x N, mixed[:, j] = sum_i psi[j][i] g[:, i]
    Vector o;        // C x N
  };

  static void project(const Vector& wmat, std::size_t rows, std::size_t cols, const double* x, std::size_t n,
                      double* out) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += wmat[r * cols + c] * x[c * n + j];
        out[r * n + j] = acc;
      }
  }

  Intermediates compute(const Tensor& x) const {
    const std::size_t n = locations(), c = channels, cb = reduced;
    Intermediates it;
    it.u.resize(cb * n);
    it.v.resize(cb * n);
    it.g.resize(cb * n);
    project(wu, cb, c, x.data.data(), n, it.u.data());
    project(wv, cb, c, x.data.data(), n, it.v.data());
    project(wg, cb, c, x.data.data(), n, it.g.data());

    it.psi.assign(n * n, 0.0);
    Vector col(n);
    for (std::size_t j = 0; j < n; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < cb; ++k) s += it.u[k * n + i] * it.v[k * n + j];
        col[i] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        col[i] = std::exp(col[i] - mx);
        z += col[i];
      }
      for (std::size_t i = 0; i < n; ++i) it.psi[j * n + i] = col[i] / z;
    }

    it.mixed.assign(cb * n, 0.0);
    for (std::size_t k = 0; k < cb; ++k)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += it.psi[j * n + i] * it.g[k * n + i];
        it.mixed[k * n + j] = acc;
      }
    it.o.resize(c * n);
    project(wphi, c, cb, it.mixed.data(), n, it.o.data());
    return it;
  }

  Tensor forward(const Tensor& x) const {
    detail::expect_shape(x, in_shape(), "SelfAttention");
    if (lambda[0] == 0.0) return x;
    const auto it = compute(x);
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += lambda[0] * it.o[i];
    return y;
  }

  Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy) const {
    Tensor gx = gy;
    if (lambda[0] == 0.0) return gx;
    const std::size_t n = locations(), c = channels, cb = reduced;
    const auto it = compute(x);

    // g_mixed = Wphi^T (lambda * gy)
    Vector gmix(cb * n, 0.0);
    for (std::size_t k = 0; k < cb; ++k)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) acc += wphi[ch * cb + k] * gy.data[ch * n + j];
        gmix[k * n + j] = lambda[0] * acc;
      }
    // mixed = g psi^T  ->  g_g = g_mixed psi,  g_psi = g_mixed^T g
    Vector gg(cb * n, 0.0), gs(n * n, 0.0);
    for (std::size_t k = 0; k < cb; ++k)
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += gmix[k * n + j] * it.psi[j * n + i];
        gg[k * n + i] = acc;
      }
    for (std::size_t j = 0; j < n; ++j) {
      // softmax reverse rule on row j, written into gs[i][j] (score layout s_ij)
      double dotp = 0.0;
      Vector gpsi(n);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < cb; ++k) acc += gmix[k * n + j] * it.g[k * n + i];
        gpsi[i] = acc;
        dotp += acc * it.psi[j * n + i];
      }
      for (std::size_t i = 0; i < n; ++i) gs[i * n + j] = it.psi[j * n + i] * (gpsi[i] - dotp);
    }
    // s = u^T v  ->  g_u = v gs^T,  g_v = u gs
    Vector gu(cb * n, 0.0), gv(cb * n, 0.0);
    for (std::size_t k = 0; k < cb; ++k)
      for (std::size_t i = 0; i < n; ++i) {
        double au = 0.0, av = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          au += gs[i * n + j] * it.v[k * n + j];
          av += it.u[k * n + j] * gs[j * n + i];
        }
        gu[k * n + i] = au;
        gv[k * n + i] = av;
      }
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < cb; ++k)
          acc += wu[k * c + ch] * gu[k * n + i] + wv[k * c + ch] * gv[k * n + i] + wg[k * c + ch] * gg[k * n + i];
        gx.data[ch * n + i] += acc;
      }
    return gx;
  }

  std::vector<Vector*> params() { return {&wu, &wv, &wg, &wphi, &lambda}; }
  std::vector<const Vector*> params() const { return {&wu, &wv, &wg, &wphi, &lambda}; }
};

}  // namespace latentmc::nn
