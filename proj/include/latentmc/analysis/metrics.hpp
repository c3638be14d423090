#pragma once

// Reconstruction quality metrics. Images are taken to lie in [0, 1].

#include <array>
#include <limits>

#include "latentmc/forward/image.hpp"

namespace latentmc {

inline double mse(const ImageGrid& a, const ImageGrid& b) {
  if (a.side() != b.side()) throw ShapeError("mse: image sizes differ");
  if (a.size() == 0) throw ShapeError("mse: empty image");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

/// 10 log10(1 / MSE); +inf for identical images.
inline double psnr(const ImageGrid& a, const ImageGrid& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

struct SsimOptions {
  static constexpr std::size_t kWindow = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

inline std::array<double, SsimOptions::kWindow * SsimOptions::kWindow> gaussian_window(double sigma) {
  constexpr std::size_t w = SsimOptions::kWindow;
  std::array<double, w * w> g{};
  const double c = (w - 1) / 2.0;
  double total = 0.0;
  for (std::size_t r = 0; r < w; ++r)
    for (std::size_t k = 0; k < w; ++k) {
      const double dr = r - c, dk = k - c;
      g[r * w + k] = std::exp(-(dr * dr + dk * dk) / (2.0 * sigma * sigma));
      total += g[r * w + k];
    }
  for (auto& v : g) v /= total;
  return g;
}

}  // namespace detail

/// Mean SSIM over all fully contained 11x11 windows (Gaussian weights).
inline double ssim(const ImageGrid& a, const ImageGrid& b, const SsimOptions& opt = {}) {
  constexpr std::size_t w = SsimOptions::kWindow;
  if (a.side() != b.side()) throw ShapeError("ssim: image sizes differ");
  if (a.side() < w) throw ShapeError("ssim: image side " + std::to_string(a.side()) + " is smaller than the 11x11 window");
  const auto g = detail::gaussian_window(opt.sigma);
  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  const std::size_t n = a.side() - w + 1;
  double total = 0.0;
  for (std::size_t r0 = 0; r0 < n; ++r0)
    for (std::size_t c0 = 0; c0 < n; ++c0) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t r = 0; r < w; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          const double wt = g[r * w + c];
          const double x = a(r0 + r, c0 + c), y = b(r0 + r, c0 + c);
          ma += wt * x;
          mb += wt * y;
          saa += wt * x * x;
          sbb += wt * y * y;
          sab += wt * x * y;
        }
      // written so that swapping a and b gives bitwise the same terms
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      const double num = (ma * mb + ma * mb + c1) * (cov + cov + c2);
      const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
      total += num / den;
    }
  return total / static_cast<double>(n * n);
}

}  // namespace latentmc
