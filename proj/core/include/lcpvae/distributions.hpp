#pragma once

#include <cstddef>
#include <random>

#include "lcpvae/autodiff.hpp"

namespace lcpvae {

/// Encoders emit log standard deviations; values are clamped into this range.
inline constexpr double kMinLogStd = -7.0;
inline constexpr double kMaxLogStd = 4.0;

/// Batch of diagonal Gaussians, one per row: `mean` and `log_std` are both
/// [batch, dim]. The standard deviation is exp(log_std) and therefore always
/// positive.
struct DiagGaussian {
  Var mean;
  Var log_std;

  DiagGaussian() = default;
  DiagGaussian(Var mean_, Var log_std_);

  /// Wraps raw encoder outputs, clamping log_std to [kMinLogStd, kMaxLogStd].
  static DiagGaussian from_encoder(const Var& mean, const Var& raw_log_std);
  /// N(0, I) with `rows` rows of dimension `dim`, as constants.
  static DiagGaussian standard(std::size_t rows, std::size_t dim);
  static DiagGaussian constant(Tensor mean, Tensor log_std);

  std::size_t rows() const { return mean.value().rows(); }
  std::size_t dim() const { return mean.value().cols(); }
  Var std_dev() const { return exp(log_std); }
};

/// Both parameters behind a stop-gradient edge.
DiagGaussian stop_gradient(const DiagGaussian& q);

/// [rows, dim] standard normal draws.
Tensor standard_normal(std::size_t rows, std::size_t dim, std::mt19937_64& rng);

/// mean + std * eps.
Var reparam_sample(const DiagGaussian& q, const Tensor& eps);

/// Samples the primary latent relative to a conditional posterior:
/// (mean + std * cond.mean) + (std * cond.std) * eps.
Var extended_reparam_sample(const DiagGaussian& primary, const DiagGaussian& conditional, const Tensor& eps);

/// Posterior N(mean + std * cond.mean, (std * cond.std)^2) implied by the
/// extended sample.
DiagGaussian compose_posterior(const DiagGaussian& primary, const DiagGaussian& conditional);

// Per-entry KL contributions, [batch, dim]. Summing a row gives the KL of
// that row's Gaussian.
Var kl_to_standard_normal_terms(const DiagGaussian& q);
Var kl_diag_gaussians_terms(const DiagGaussian& q, const DiagGaussian& p);
Var cpvae_kl_terms(const DiagGaussian& primary, const DiagGaussian& conditional);

// KL summed over dimensions and averaged over rows.
Var kl_to_standard_normal(const DiagGaussian& q);
Var kl_diag_gaussians(const DiagGaussian& q, const DiagGaussian& p);
/// KL(N(mean + std*cond.mean, (std*cond.std)^2) || N(cond.mean, cond.std^2)).
/// Callers freezing the conditional side pass it through stop_gradient.
Var cpvae_kl(const DiagGaussian& primary, const DiagGaussian& conditional);

}  // namespace lcpvae
