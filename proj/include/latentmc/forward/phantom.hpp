#pragma once

// Random piecewise-smooth phantoms made of discs and ellipses. Feature centres
// are drawn from an isotropic normal and truncated to the placement disc.

#include <algorithm>
#include <numbers>
#include <random>

#include "latentmc/forward/image.hpp"

namespace latentmc {

enum class FeatureKind { UniformDisc, UniformEllipse, GradientDisc, GradientEllipse };

struct PhantomSpec {
  std::size_t side = 32;
  std::size_t n_features = 6;
  std::vector<FeatureKind> kinds{FeatureKind::UniformDisc, FeatureKind::UniformEllipse,
                                 FeatureKind::GradientDisc, FeatureKind::GradientEllipse};
  double min_intensity = 0.2;
  double max_intensity = 1.0;
  /// Radius (pixels) of the disc that feature centres are confined to. 0 selects side/4.
  double placement_radius = 0.0;
  /// Standard deviation of centre placement, as a fraction of placement_radius.
  double placement_scale = 0.5;
  std::uint64_t seed = 0;

  double effective_radius() const {
    return placement_radius > 0.0 ? placement_radius : static_cast<double>(side) / 4.0;
  }

  void validate() const {
    if (side < 2) throw Error("phantom: side must be at least 2");
    if (n_features < 1) throw Error("phantom: n_features must be at least 1");
    if (kinds.empty()) throw Error("phantom: at least one feature kind is required");
    if (!(0.0 <= min_intensity && min_intensity <= max_intensity && max_intensity <= 1.0))
      throw Error("phantom: intensities must satisfy 0 <= min <= max <= 1");
    if (!(placement_scale > 0.0)) throw Error("phantom: placement_scale must be positive");
  }
};

struct PhantomFeature {
  FeatureKind kind;
  double cx, cy;  // centre, pixels from image centre (x right, y up)
  double semi_a, semi_b;
  double rotation;
  double intensity;
};

inline std::vector<PhantomFeature> phantom_layout(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  const double radius = spec.effective_radius();
  const double scale = spec.placement_scale * radius;
  const double side = static_cast<double>(spec.side);

  std::vector<PhantomFeature> out;
  out.reserve(spec.n_features);
  for (std::size_t i = 0; i < spec.n_features; ++i) {
    PhantomFeature f{};
    f.kind = spec.kinds[static_cast<std::size_t>(unit(rng) * static_cast<double>(spec.kinds.size())) %
                       spec.kinds.size()];
    do {
      f.cx = scale * normal(rng);
      f.cy = scale * normal(rng);
    } while (f.cx * f.cx + f.cy * f.cy > radius * radius);
    f.semi_a = side * (0.06 + 0.14 * unit(rng));
    const bool ellipse = f.kind == FeatureKind::UniformEllipse || f.kind == FeatureKind::GradientEllipse;
    f.semi_b = ellipse ? f.semi_a * (0.35 + 0.55 * unit(rng)) : f.semi_a;
    f.rotation = ellipse ? std::numbers::pi * unit(rng) : 0.0;
    f.intensity = spec.min_intensity + (spec.max_intensity - spec.min_intensity) * unit(rng);
    out.push_back(f);
  }
  return out;
}

inline ImageGrid render_phantom(std::size_t side, const std::vector<PhantomFeature>& features) {
  ImageGrid img(side);
  const double half = 0.5 * static_cast<double>(side - 1);
  for (const auto& f : features) {
    const double ct = std::cos(f.rotation), st = std::sin(f.rotation);
    const bool gradient = f.kind == FeatureKind::GradientDisc || f.kind == FeatureKind::GradientEllipse;
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const double dx = static_cast<double>(c) - half - f.cx;
        const double dy = half - static_cast<double>(r) - f.cy;
        const double u = (dx * ct + dy * st) / f.semi_a;
        const double v = (-dx * st + dy * ct) / f.semi_b;
        const double rho2 = u * u + v * v;
        if (rho2 > 1.0) continue;
        img(r, c) = gradient ? f.intensity * (1.0 - 0.7 * rho2) : f.intensity;
      }
    }
  }
  for (auto& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

inline ImageGrid generate_phantom(const PhantomSpec& spec) {
  return render_phantom(spec.side, phantom_layout(spec));
}

}  // namespace latentmc
