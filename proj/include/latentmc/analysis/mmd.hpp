#pragma once

// Two-sample maximum mean discrepancy with a Gaussian kernel, and the running
// mean discrepancy between an image-space and a latent-space chain.

#include <algorithm>

#include "latentmc/core.hpp"

namespace latentmc {

struct MmdResult {
  double value = 0.0;           // unbiased MMD^2
  double standard_error = 0.0;  // of the estimate
  double bandwidth = 0.0;
};

namespace detail {

inline double sq_dist(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// Median pairwise distance over the pooled sets (at most 1000 points from each).
inline double median_bandwidth(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  std::vector<const Vector*> pool;
  for (std::size_t i = 0; i < std::min<std::size_t>(a.size(), 1000); ++i) pool.push_back(&a[i]);
  for (std::size_t i = 0; i < std::min<std::size_t>(b.size(), 1000); ++i) pool.push_back(&b[i]);
  Vector d;
  d.reserve(pool.size() * (pool.size() - 1) / 2);
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = i + 1; j < pool.size(); ++j) d.push_back(std::sqrt(sq_dist(*pool[i], *pool[j])));
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

}  // namespace detail

/// Unbiased MMD^2 with k(x, y) = exp(-||x - y||^2 / (2 h^2)). Pass bandwidth <= 0
/// for the median heuristic. The standard error comes from the variance of the
/// row means of h_ij = k(a_i,a_j) + k(b_i,b_j) - k(a_i,b_j) - k(a_j,b_i) over the
/// first min(n, m) points of each set.
inline MmdResult mmd(const std::vector<Vector>& a, const std::vector<Vector>& b, double bandwidth = 0.0) {
  if (a.size() < 2 || b.size() < 2) throw InsufficientDataError("mmd: each set needs at least 2 samples");
  const std::size_t dim = a.front().size();
  for (const auto* set : {&a, &b})
    for (const auto& v : *set)
      if (v.size() != dim) throw ShapeError("mmd: samples have inconsistent sizes");
  MmdResult res;
  res.bandwidth = bandwidth > 0.0 ? bandwidth : detail::median_bandwidth(a, b);
  const double inv = 1.0 / (2.0 * res.bandwidth * res.bandwidth);
  auto k = [&](const Vector& x, const Vector& y) { return std::exp(-detail::sq_dist(x, y) * inv); };

  const std::size_t n = a.size(), m = b.size();
  if (n == m) {
    // U-statistic over i != j of h_ij; symmetric in (i, j)
    Vector row(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double h = k(a[i], a[j]) + k(b[i], b[j]) - k(a[i], b[j]) - k(a[j], b[i]);
        row[i] += h;
        row[j] += h;
        total += 2.0 * h;
      }
    const double nn = static_cast<double>(n);
    res.value = total / (nn * (nn - 1.0));
    double var = 0.0;
    for (auto& r : row) {
      r /= (nn - 1.0);
      var += (r - res.value) * (r - res.value);
    }
    var /= (nn - 1.0);
    res.standard_error = std::sqrt(4.0 * var / nn);
    return res;
  }

  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) kaa += 2.0 * k(a[i], a[j]);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) kbb += 2.0 * k(b[i], b[j]);
  for (const auto& x : a)
    for (const auto& y : b) kab += k(x, y);
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  res.value = kaa / (dn * (dn - 1.0)) + kbb / (dm * (dm - 1.0)) - 2.0 * kab / (dn * dm);
  const std::size_t q = std::min(n, m);
  const std::vector<Vector> a2(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(q));
  const std::vector<Vector> b2(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(q));
  res.standard_error = mmd(a2, b2, res.bandwidth).standard_error;
  return res;
}

struct DiscrepancyPoint {
  std::size_t n;
  double chi;
};

/// Log-spaced sample counts 1 .. n_max, `per_decade` points per decade, n_max included.
inline std::vector<std::size_t> log_grid(std::size_t n_max, int per_decade = 10) {
  std::vector<std::size_t> g;
  if (n_max == 0) return g;
  const double top = std::log10(static_cast<double>(n_max));
  for (int i = 0;; ++i) {
    const double e = static_cast<double>(i) / per_decade;
    if (e > top) break;
    const auto n = static_cast<std::size_t>(std::llround(std::pow(10.0, e)));
    if (g.empty() || n > g.back()) g.push_back(n);
  }
  if (g.back() != n_max) g.push_back(n_max);
  return g;
}

/// chi_n = ||mean(x_1..x_n) - mean(y_1..y_n)||^2 on a log-spaced grid of n, up
/// to the shorter of the two sequences.
inline std::vector<DiscrepancyPoint> chain_discrepancy(const std::vector<Vector>& x, const std::vector<Vector>& y,
                                                       int per_decade = 10) {
  if (x.empty() || y.empty()) throw InsufficientDataError("chain_discrepancy: empty sample sequence");
  const std::size_t p = x.front().size();
  if (y.front().size() != p) throw ShapeError("chain_discrepancy: image sizes differ");
  const std::size_t n_max = std::min(x.size(), y.size());
  std::vector<DiscrepancyPoint> out;
  Vector diff(p, 0.0);  // running sum of x_i - y_i
  std::size_t done = 0;
  for (auto n : log_grid(n_max, per_decade)) {
    for (; done < n; ++done) {
      if (x[done].size() != p || y[done].size() != p) throw ShapeError("chain_discrepancy: image sizes differ");
      for (std::size_t j = 0; j < p; ++j) diff[j] += x[done][j] - y[done][j];
    }
    const double inv = 1.0 / static_cast<double>(n);
    double chi = 0.0;
    for (double d : diff) chi += (d * inv) * (d * inv);
    out.push_back({n, chi});
  }
  return out;
}

}  // namespace latentmc
