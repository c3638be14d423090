#pragma once

// Posterior summaries of a chain record: pixelwise mean/sd, HPD envelopes and
// their coverage, sample covariance and the intrinsic-dimension comparison.

#include <algorithm>
#include <numeric>

#include "latentmc/forward/image.hpp"
#include "latentmc/nn/network.hpp"
#include "latentmc/sampler/chain.hpp"

namespace latentmc {

/// Push every retained latent sample through the generator.
inline std::vector<Vector> pushforward(const ChainRecord& rec, const nn::NetworkGraph& gen) {
  if (rec.dim != gen.input_shape.size()) throw ShapeError("pushforward: record dimension does not match generator input");
  std::vector<Vector> out;
  out.reserve(rec.n_samples());
  for (std::size_t i = 0; i < rec.n_samples(); ++i) out.push_back(nn::forward(gen, rec.sample(i)));
  return out;
}

/// Samples of an image-space chain, one image per sample.
inline std::vector<Vector> sample_images(const ChainRecord& rec) {
  std::vector<Vector> out;
  out.reserve(rec.n_samples());
  for (std::size_t i = 0; i < rec.n_samples(); ++i) out.emplace_back(rec.sample(i).begin(), rec.sample(i).end());
  return out;
}

enum class BandMode : std::uint8_t {
  Envelope,  // density-ranked retention + pixelwise min/max
  Quantile,  // pixelwise equal-tailed quantiles
};

struct Band {
  Vector lower;
  Vector upper;
};

namespace detail {

inline void check_images(const std::vector<Vector>& images, std::size_t min_count) {
  if (images.size() < min_count)
    throw InsufficientDataError("need at least " + std::to_string(min_count) + " samples, got " +
                                std::to_string(images.size()));
  for (const auto& im : images)
    if (im.size() != images.front().size()) throw ShapeError("samples have inconsistent sizes");
}

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
}

/// Linear-interpolated quantile of a sorted sequence.
inline double sorted_quantile(const Vector& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace detail

/// Indices of the ceil((1 - alpha) n) samples with the highest log density.
/// Ties are broken by sample order so the selection is deterministic.
inline std::vector<std::size_t> hpd_retained(const Vector& log_density, double alpha) {
  detail::check_alpha(alpha);
  const std::size_t n = log_density.size();
  if (n == 0) throw InsufficientDataError("hpd: no samples");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return log_density[a] > log_density[b]; });
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(n) - 1e-9)));
  idx.resize(keep);
  return idx;
}

inline Band credible_band(const std::vector<Vector>& images, const Vector& log_density, double alpha,
                          BandMode mode = BandMode::Envelope) {
  detail::check_images(images, 1);
  detail::check_alpha(alpha);
  const std::size_t p = images.front().size();
  Band band{Vector(p), Vector(p)};
  if (mode == BandMode::Envelope) {
    if (log_density.size() != images.size()) throw ShapeError("credible_band: one log density per sample required");
    const auto keep = hpd_retained(log_density, alpha);
    band.lower = band.upper = images[keep.front()];
    for (std::size_t k = 1; k < keep.size(); ++k) {
      const auto& im = images[keep[k]];
      for (std::size_t j = 0; j < p; ++j) {
        band.lower[j] = std::min(band.lower[j], im[j]);
        band.upper[j] = std::max(band.upper[j], im[j]);
      }
    }
  } else {
    Vector col(images.size());
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t i = 0; i < images.size(); ++i) col[i] = images[i][j];
      std::sort(col.begin(), col.end());
      band.lower[j] = detail::sorted_quantile(col, alpha / 2.0);
      band.upper[j] = detail::sorted_quantile(col, 1.0 - alpha / 2.0);
    }
  }
  return band;
}

/// Percentage of truth pixels inside the credible band at level 1 - alpha.
inline double hpdi_coverage(const std::vector<Vector>& images, const Vector& log_density, std::span<const double> truth,
                            double alpha, BandMode mode = BandMode::Envelope) {
  const auto band = credible_band(images, log_density, alpha, mode);
  if (truth.size() != band.lower.size()) throw ShapeError("hpdi_coverage: truth size does not match samples");
  std::size_t inside = 0;
  for (std::size_t j = 0; j < truth.size(); ++j)
    if (truth[j] >= band.lower[j] && truth[j] <= band.upper[j]) ++inside;
  return 100.0 * static_cast<double>(inside) / static_cast<double>(truth.size());
}

struct PosteriorSummary {
  ImageGrid mean;
  ImageGrid sd;
  ImageGrid lower;
  ImageGrid upper;
  std::size_t n_samples = 0;
  double alpha = 0.05;
};

inline PosteriorSummary summarize(const std::vector<Vector>& images, const Vector& log_density, double alpha,
                                  BandMode mode = BandMode::Envelope) {
  detail::check_images(images, 2);
  const std::size_t p = images.front().size();
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(p))));
  if (side * side != p) throw ShapeError("summarize: samples are not square images");
  const double n = static_cast<double>(images.size());
  // shifted by the first sample, so identical samples give their exact value and sd 0
  const Vector& ref = images.front();
  Vector mean(p, 0.0), var(p, 0.0);
  for (const auto& im : images)
    for (std::size_t j = 0; j < p; ++j) mean[j] += im[j] - ref[j];
  for (std::size_t j = 0; j < p; ++j) mean[j] = ref[j] + mean[j] / n;
  for (const auto& im : images)
    for (std::size_t j = 0; j < p; ++j) var[j] += (im[j] - mean[j]) * (im[j] - mean[j]);
  for (auto& v : var) v = std::sqrt(v / (n - 1.0));
  auto band = credible_band(images, log_density, alpha, mode);
  return {ImageGrid(side, std::move(mean)), ImageGrid(side, std::move(var)), ImageGrid(side, std::move(band.lower)),
          ImageGrid(side, std::move(band.upper)), images.size(), alpha};
}

inline PosteriorSummary summarize(const ChainRecord& rec, const nn::NetworkGraph& gen, double alpha,
                                  BandMode mode = BandMode::Envelope) {
  return summarize(pushforward(rec, gen), rec.log_density, alpha, mode);
}

/// Bessel-corrected sample covariance (row-major d x d), symmetric by construction.
inline Matrix covariance(const std::vector<Vector>& xs) {
  detail::check_images(xs, 2);
  const std::size_t d = xs.front().size();
  const double n = static_cast<double>(xs.size());
  Vector mean(d, 0.0);
  for (const auto& x : xs)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[j];
  for (auto& v : mean) v /= n;
  Matrix c(d, d);
  Vector dev(d);
  for (const auto& x : xs) {
    for (std::size_t j = 0; j < d; ++j) dev[j] = x[j] - mean[j];
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t k = r; k < d; ++k) c(r, k) += dev[r] * dev[k];
  }
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t k = r; k < d; ++k) {
      c(r, k) /= (n - 1.0);
      c(k, r) = c(r, k);
    }
  return c;
}

inline double trace(const Matrix& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(m.rows, m.cols); ++i) t += m(i, i);
  return t;
}

enum class DimVerdict : std::uint8_t { UnderDim, Adequate, ExcessDim };

inline std::string verdict_name(DimVerdict v) {
  switch (v) {
    case DimVerdict::UnderDim: return "UnderDim";
    case DimVerdict::Adequate: return "Adequate";
    case DimVerdict::ExcessDim: return "ExcessDim";
  }
  return "?";
}

struct DimReport {
  std::size_t latent_dim = 0;
  double trace_prior = 0.0;
  double trace_encoded = 0.0;
  Matrix encoded_covariance;
  DimVerdict verdict = DimVerdict::Adequate;
};

/// Compares tr(cov(prior)) with tr(cov(encoded)). Within `tolerance` (relative
/// to the prior trace) the latent size is Adequate; a larger prior trace means
/// unused dimensions.
inline DimReport intrinsic_dimension(const std::vector<Vector>& encoded, const std::vector<Vector>& prior,
                                     double tolerance = 0.05) {
  if (encoded.empty() || prior.empty()) throw InsufficientDataError("intrinsic_dimension: empty sample set");
  const std::size_t m = prior.front().size();
  if (encoded.front().size() != m) throw ShapeError("intrinsic_dimension: encoded and prior dimensions differ");
  if (encoded.size() < m + 1 || prior.size() < m + 1)
    throw InsufficientDataError("intrinsic_dimension: need at least m+1 = " + std::to_string(m + 1) +
                                " samples per set for a full-rank covariance");
  DimReport rep;
  rep.latent_dim = m;
  rep.encoded_covariance = covariance(encoded);
  rep.trace_encoded = trace(rep.encoded_covariance);
  rep.trace_prior = trace(covariance(prior));
  const double gap = rep.trace_prior - rep.trace_encoded;
  const double tol = tolerance * rep.trace_prior;
  rep.verdict = gap > tol ? DimVerdict::ExcessDim : (gap < -tol ? DimVerdict::UnderDim : DimVerdict::Adequate);
  return rep;
}

}  // namespace latentmc
