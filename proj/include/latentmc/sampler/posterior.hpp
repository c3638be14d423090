#pragma once

#include <concepts>

#include "latentmc/forward/radon.hpp"
#include "latentmc/nn/network.hpp"

namespace latentmc {

struct PotentialValue {
  double value = 0.0;
  Vector grad;
};

/// A smooth negative log density: U(z) and its gradient.
template <class P>
concept DifferentiablePotential = requires(const P& p, std::span<const double> z) {
  { p.dim() } -> std::convertible_to<std::size_t>;
  { p.evaluate(z) } -> std::same_as<PotentialValue>;
};

/// A target written as exp(-phi(x)) relative to the N(0, I) reference measure
/// that the pCN proposal preserves.
template <class P>
concept PcnTarget = requires(const P& p, std::span<const double> x) {
  { p.dim() } -> std::convertible_to<std::size_t>;
  { p.phi(x) } -> std::convertible_to<double>;
};

/// Posterior over the latent code z given a noisy measurement y:
///   U(z) = ||y - A G(z)||^2 / (2 sigma^2) + ||z||^2 / 2.
/// Holds a non-owning reference to the generator, which must outlive it.
template <LinearOperator Op>
class LatentPosterior {
public:
  LatentPosterior(const nn::NetworkGraph& generator, Op op, Vector measurement, double sigma,
                  bool phi_includes_prior = false)
      : gen_(&generator), op_(std::move(op)), y_(std::move(measurement)), sigma_(sigma),
        phi_includes_prior_(phi_includes_prior) {
    if (!(sigma_ > 0.0)) throw Error("LatentPosterior: sigma must be positive");
    if (gen_->output_shape().size() != op_.input_size())
      throw ShapeError("LatentPosterior: generator output size " + std::to_string(gen_->output_shape().size()) +
                       " does not match operator input size " + std::to_string(op_.input_size()));
    if (y_.size() != op_.output_size()) throw ShapeError("LatentPosterior: measurement size mismatch");
  }

  std::size_t dim() const { return gen_->input_shape.size(); }
  double sigma() const { return sigma_; }
  const Vector& measurement() const { return y_; }
  const Op& forward_operator() const { return op_; }
  const nn::NetworkGraph& generator() const { return *gen_; }
  bool phi_includes_prior() const { return phi_includes_prior_; }

  Vector generate(std::span<const double> z) const {
    check_dim(z);
    auto x = nn::forward(*gen_, z);
    if (!all_finite(x)) poisoned(z);
    return x;
  }

  /// Data misfit F(z) = ||y - A G(z)||^2 / (2 sigma^2).
  double likelihood(std::span<const double> z) const {
    const auto x = generate(z);
    const auto ax = op_.apply(x);
    double s = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) s += (y_[i] - ax[i]) * (y_[i] - ax[i]);
    return s / (2.0 * sigma_ * sigma_);
  }

  /// pCN potential; the prior term belongs to the reference measure unless the
  /// compatibility flag asks for it to be included as well.
  double phi(std::span<const double> z) const {
    double v = likelihood(z);
    if (phi_includes_prior_) v += 0.5 * squared_norm(z);
    return v;
  }

  /// U(z) and grad U = J_G^T A^T (A G(z) - y) / sigma^2 + z.
  PotentialValue evaluate(std::span<const double> z) const {
    check_dim(z);
    std::vector<nn::Tensor> acts;
    const auto x = nn::forward_recorded(*gen_, nn::Tensor(gen_->input_shape, Vector(z.begin(), z.end())), acts);
    if (!all_finite(x.data)) poisoned(z);
    auto resid = op_.apply(x.data);
    double misfit = 0.0;
    for (std::size_t i = 0; i < resid.size(); ++i) {
      resid[i] -= y_[i];
      misfit += resid[i] * resid[i];
    }
    const double inv_var = 1.0 / (sigma_ * sigma_);
    auto back = op_.adjoint(resid);
    for (auto& v : back) v *= inv_var;
    PotentialValue out;
    out.grad = nn::vjp_recorded(*gen_, acts, back).data;
    for (std::size_t i = 0; i < z.size(); ++i) out.grad[i] += z[i];
    out.value = 0.5 * misfit * inv_var + 0.5 * squared_norm(z);
    return out;
  }

private:
  void check_dim(std::span<const double> z) const {
    if (z.size() != dim())
      throw ShapeError("latent dimension " + std::to_string(z.size()) + " does not match generator input " +
                       std::to_string(dim()));
  }
  [[noreturn]] void poisoned(std::span<const double> z) const {
    const auto idx = nn::first_nonfinite_layer(*gen_, nn::Tensor(gen_->input_shape, Vector(z.begin(), z.end())));
    const std::string where = idx ? "layer '" + gen_->layers[*idx].name + "'" : "the forward operator";
    throw NumericalError("generator produced non-finite output at " + where);
  }

  const nn::NetworkGraph* gen_;
  Op op_;
  Vector y_;
  double sigma_;
  bool phi_includes_prior_;
};

/// Anisotropic total variation with reflecting boundaries (the boundary
/// differences vanish): sum |x[i+1,j] - x[i,j]| + |x[i,j+1] - x[i,j]|.
inline double total_variation(std::span<const double> x, std::size_t side) {
  if (x.size() != side * side) throw ShapeError("total_variation: size mismatch");
  double tv = 0.0;
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double v = x[r * side + c];
      if (r + 1 < side) tv += std::abs(x[(r + 1) * side + c] - v);
      if (c + 1 < side) tv += std::abs(x[r * side + c + 1] - v);
    }
  return tv;
}

/// Image-space posterior with a TV prior, exp(-||y - Ax||^2/(2 sigma^2) - tau TV(x)).
/// Expressed against the N(0, I) pCN reference: phi = misfit + tau TV - ||x||^2/2.
class TvPosterior {
public:
  TvPosterior(RadonOperator op, Vector measurement, double sigma, double tau)
      : op_(std::move(op)), y_(std::move(measurement)), sigma_(sigma), tau_(tau) {
    if (!(tau_ > 0.0)) throw Error("TvPosterior: tau must be positive");
    if (!(sigma_ > 0.0)) throw Error("TvPosterior: sigma must be positive");
    if (y_.size() != op_.output_size()) throw ShapeError("TvPosterior: measurement size mismatch");
  }

  std::size_t dim() const { return op_.input_size(); }
  std::size_t side() const { return op_.geometry().image_side; }
  double tau() const { return tau_; }
  double sigma() const { return sigma_; }

  double misfit(std::span<const double> x) const {
    const auto ax = op_.apply(x);
    double s = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) s += (y_[i] - ax[i]) * (y_[i] - ax[i]);
    return s / (2.0 * sigma_ * sigma_);
  }
  double phi(std::span<const double> x) const {
    return misfit(x) + tau_ * total_variation(x, side()) - 0.5 * squared_norm(x);
  }

private:
  RadonOperator op_;
  Vector y_;
  double sigma_;
  double tau_;
};

}  // namespace latentmc
