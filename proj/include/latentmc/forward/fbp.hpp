#pragma once

#include <complex>
#include <numbers>

#include "latentmc/forward/radon.hpp"

namespace latentmc {

enum class FbpFilter { RamLak, Hann };

namespace detail {

// In-place iterative radix-2 FFT; `data.size()` must be a power of two.
inline void fft(std::vector<std::complex<double>>& data, bool inverse) {
  const std::size_t n = data.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        auto u = data[i + k];
        auto v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : data) x /= static_cast<double>(n);
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Frequency response of the band-limited ramp, built from its exact spatial
// samples (h[0] = 1/4, h[odd k] = -1/(pi k)^2) so the DC term is not lost.
inline Vector ramp_response(std::size_t padded, FbpFilter filter) {
  std::vector<std::complex<double>> h(padded);
  const auto half = static_cast<long>(padded / 2);
  for (long k = -half; k < half; ++k) {
    double v = 0.0;
    if (k == 0)
      v = 0.25;
    else if (k % 2 != 0)
      v = -1.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(k * k));
    h[static_cast<std::size_t>((k + static_cast<long>(padded)) % static_cast<long>(padded))] = v;
  }
  fft(h, false);
  Vector resp(padded);
  for (std::size_t i = 0; i < padded; ++i) {
    double r = h[i].real();
    if (filter == FbpFilter::Hann) {
      const double f = static_cast<double>(std::min(i, padded - i)) / static_cast<double>(padded);
      r *= 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * f));
    }
    resp[i] = r;
  }
  return resp;
}

}  // namespace detail

/// Filtered back projection, clipped to [0, 1].
inline ImageGrid fbp(const Sinogram& sino, const RadonGeometry& geom,
                     FbpFilter filter = FbpFilter::RamLak) {
  if (geom.n_angles < 2) throw InsufficientDataError("fbp: need at least two projection angles");
  if (sino.values.rows != geom.n_angles || sino.values.cols != geom.n_detectors)
    throw ShapeError("fbp: sinogram shape does not match geometry");

  const std::size_t nd = geom.n_detectors;
  const std::size_t padded = detail::next_pow2(2 * nd);
  const Vector resp = detail::ramp_response(padded, filter);

  Matrix filtered(geom.n_angles, nd);
  std::vector<std::complex<double>> row(padded);
  for (std::size_t a = 0; a < geom.n_angles; ++a) {
    std::fill(row.begin(), row.end(), std::complex<double>(0.0));
    for (std::size_t d = 0; d < nd; ++d) row[d] = sino(a, d);
    detail::fft(row, false);
    for (std::size_t i = 0; i < padded; ++i) row[i] *= resp[i];
    detail::fft(row, true);
    for (std::size_t d = 0; d < nd; ++d) filtered(a, d) = row[d].real();
  }

  const std::size_t n = geom.image_side;
  const double half = 0.5 * static_cast<double>(n - 1);
  const double det_half = 0.5 * static_cast<double>(nd - 1);
  const double scale = std::numbers::pi / static_cast<double>(geom.n_angles);
  ImageGrid out(n);
  for (std::size_t a = 0; a < geom.n_angles; ++a) {
    const double ct = std::cos(geom.angles[a]), st = std::sin(geom.angles[a]);
    for (std::size_t r = 0; r < n; ++r) {
      const double y = half - static_cast<double>(r);
      for (std::size_t c = 0; c < n; ++c) {
        const double x = static_cast<double>(c) - half;
        const double pos = x * ct + y * st + det_half;
        const double p0 = std::floor(pos);
        const auto i0 = static_cast<long>(p0);
        const double w = pos - p0;
        double v = 0.0;
        if (i0 >= 0 && i0 < static_cast<long>(nd)) v += (1.0 - w) * filtered(a, static_cast<std::size_t>(i0));
        if (i0 + 1 >= 0 && i0 + 1 < static_cast<long>(nd))
          v += w * filtered(a, static_cast<std::size_t>(i0 + 1));
        out(r, c) += v * scale;
      }
    }
  }
  for (auto& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace latentmc
