#pragma once

// Parallel-beam Radon transform. Ray-driven: each ray is sampled every half
// pixel along its full diagonal extent and the image is read by bilinear
// interpolation. The operator is assembled once as a sparse matrix so the
// adjoint is the exact transpose of the forward weights.

#include <algorithm>
#include <concepts>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>

#include "latentmc/forward/image.hpp"

namespace latentmc {

struct RadonGeometry {
  std::size_t image_side = 0;
  std::size_t n_angles = 0;
  std::size_t n_detectors = 0;
  Vector angles;  // radians in [0, pi)

  /// Uniform angles in [0, pi). `n_angles == 0` selects the default of side/2.
  static RadonGeometry make(std::size_t side, std::size_t n_angles = 0) {
    if (side == 0) throw ShapeError("RadonGeometry: image side must be positive");
    if (n_angles == 0) n_angles = std::max<std::size_t>(1, side / 2);
    RadonGeometry g;
    g.image_side = side;
    g.n_angles = n_angles;
    g.n_detectors = side;
    g.angles.resize(n_angles);
    for (std::size_t a = 0; a < n_angles; ++a)
      g.angles[a] = std::numbers::pi * static_cast<double>(a) / static_cast<double>(n_angles);
    return g;
  }

  std::size_t measurement_size() const { return n_angles * n_detectors; }
  double detector_offset(std::size_t d) const {
    return static_cast<double>(d) - 0.5 * static_cast<double>(n_detectors - 1);
  }
  bool operator==(const RadonGeometry&) const = default;
};

struct Sinogram {
  RadonGeometry geometry;
  Matrix values;  // n_angles x n_detectors

  Sinogram() = default;
  explicit Sinogram(RadonGeometry g)
      : geometry(std::move(g)), values(geometry.n_angles, geometry.n_detectors) {}
  Sinogram(RadonGeometry g, Vector v)
      : geometry(std::move(g)), values(geometry.n_angles, geometry.n_detectors, std::move(v)) {}

  double& operator()(std::size_t a, std::size_t d) { return values(a, d); }
  double operator()(std::size_t a, std::size_t d) const { return values(a, d); }
};

namespace detail {

// Compressed sparse row storage of the ray weights.
struct SparseRows {
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> columns;
  Vector weights;
};

inline SparseRows assemble_radon(const RadonGeometry& g) {
  constexpr double kStep = 0.5;
  const auto n = static_cast<long>(g.image_side);
  const double half = 0.5 * static_cast<double>(g.image_side - 1);
  const double diag = std::sqrt(2.0) * static_cast<double>(g.image_side);
  const auto samples = static_cast<long>(std::ceil(diag / kStep)) + 1;

  SparseRows m;
  std::vector<std::pair<std::uint32_t, double>> row;
  for (double theta : g.angles) {
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t d = 0; d < g.n_detectors; ++d) {
      const double s = g.detector_offset(d);
      row.clear();
      for (long k = 0; k < samples; ++k) {
        const double t = (static_cast<double>(k) - 0.5 * static_cast<double>(samples - 1)) * kStep;
        const double x = s * ct - t * st;
        const double y = s * st + t * ct;
        const double fc = x + half;
        const double fr = half - y;
        const double c0 = std::floor(fc), r0 = std::floor(fr);
        const double wc = fc - c0, wr = fr - r0;
        const long ci = static_cast<long>(c0), ri = static_cast<long>(r0);
        const long cs[2] = {ci, ci + 1};
        const long rs[2] = {ri, ri + 1};
        const double wcs[2] = {1.0 - wc, wc};
        const double wrs[2] = {1.0 - wr, wr};
        for (int i = 0; i < 2; ++i) {
          if (rs[i] < 0 || rs[i] >= n) continue;
          for (int j = 0; j < 2; ++j) {
            if (cs[j] < 0 || cs[j] >= n) continue;
            const double w = wrs[i] * wcs[j] * kStep;
            if (w == 0.0) continue;
            row.emplace_back(static_cast<std::uint32_t>(rs[i] * n + cs[j]), w);
          }
        }
      }
      std::sort(row.begin(), row.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      for (std::size_t i = 0; i < row.size();) {
        std::size_t j = i;
        double w = 0.0;
        while (j < row.size() && row[j].first == row[i].first) w += row[j++].second;
        m.columns.push_back(row[i].first);
        m.weights.push_back(w);
        i = j;
      }
      m.offsets.push_back(m.columns.size());
    }
  }
  return m;
}

}  // namespace detail

/// The discrete forward operator A for a fixed geometry. Immutable after construction.
class RadonOperator {
public:
  explicit RadonOperator(RadonGeometry g) : geom_(std::move(g)), rows_(detail::assemble_radon(geom_)) {}

  const RadonGeometry& geometry() const { return geom_; }
  std::size_t input_size() const { return geom_.image_side * geom_.image_side; }
  std::size_t output_size() const { return geom_.measurement_size(); }

  void apply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != input_size() || y.size() != output_size())
      throw ShapeError("radon: image side does not match geometry");
    for (std::size_t r = 0; r + 1 < rows_.offsets.size(); ++r) {
      double acc = 0.0;
      for (auto k = rows_.offsets[r]; k < rows_.offsets[r + 1]; ++k)
        acc += rows_.weights[k] * x[rows_.columns[k]];
      y[r] = acc;
    }
  }
  Vector apply(std::span<const double> x) const {
    Vector y(output_size());
    apply(x, y);
    return y;
  }

  void adjoint(std::span<const double> y, std::span<double> x) const {
    if (x.size() != input_size() || y.size() != output_size())
      throw ShapeError("radon_adjoint: sinogram shape does not match geometry");
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t r = 0; r + 1 < rows_.offsets.size(); ++r) {
      const double yr = y[r];
      if (yr == 0.0) continue;
      for (auto k = rows_.offsets[r]; k < rows_.offsets[r + 1]; ++k)
        x[rows_.columns[k]] += rows_.weights[k] * yr;
    }
  }
  Vector adjoint(std::span<const double> y) const {
    Vector x(input_size());
    adjoint(y, x);
    return x;
  }

  Sinogram operator()(const ImageGrid& image) const {
    if (image.side() != geom_.image_side)
      throw ShapeError("radon: image side " + std::to_string(image.side()) +
                       " does not match geometry side " + std::to_string(geom_.image_side));
    return Sinogram(geom_, apply(image.values()));
  }

private:
  RadonGeometry geom_;
  detail::SparseRows rows_;
};

inline Sinogram radon(const ImageGrid& image, const RadonGeometry& geom) {
  return RadonOperator(geom)(image);
}

inline ImageGrid radon_adjoint(const Sinogram& sino, const RadonGeometry& geom) {
  if (sino.values.rows != geom.n_angles || sino.values.cols != geom.n_detectors)
    throw ShapeError("radon_adjoint: sinogram shape does not match geometry");
  RadonOperator op(geom);
  return ImageGrid(geom.image_side, op.adjoint(sino.values.values));
}

/// Identity forward operator, for denoising-type fixtures where A = I.
class IdentityOperator {
public:
  explicit IdentityOperator(std::size_t n) : n_(n) {}
  std::size_t input_size() const { return n_; }
  std::size_t output_size() const { return n_; }
  void apply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != n_ || y.size() != n_) throw ShapeError("identity operator: size mismatch");
    std::copy(x.begin(), x.end(), y.begin());
  }
  Vector apply(std::span<const double> x) const { return Vector(x.begin(), x.end()); }
  void adjoint(std::span<const double> y, std::span<double> x) const { apply(y, x); }
  Vector adjoint(std::span<const double> y) const { return apply(y); }

private:
  std::size_t n_;
};

template <class Op>
concept LinearOperator = requires(const Op& op, std::span<const double> in, std::span<double> out) {
  { op.input_size() } -> std::convertible_to<std::size_t>;
  { op.output_size() } -> std::convertible_to<std::size_t>;
  op.apply(in, out);
  op.adjoint(in, out);
};

/// Largest singular value of a linear operator by power iteration on A^T A.
template <LinearOperator Op>
double operator_norm(const Op& op, int max_iter = 500, double tol = 1e-12, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(op.input_size()), av(op.output_size()), w(op.input_size());
  for (auto& x : v) x = normal(rng);
  double nv = norm(v);
  if (nv == 0.0) return 0.0;
  for (auto& x : v) x /= nv;
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    op.apply(v, av);
    op.adjoint(av, w);
    const double next = norm(w);
    if (next == 0.0) return 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / next;
    const bool done = std::abs(next - lambda) <= tol * next;
    lambda = next;
    if (done) break;
  }
  return std::sqrt(lambda);
}

}  // namespace latentmc
