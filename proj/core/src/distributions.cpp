#include "lcpvae/distributions.hpp"

#include <string>

#include "lcpvae/error.hpp"

namespace lcpvae {
namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape " + shape_string(a) + " vs " + shape_string(b));
}

Var rows_mean(const Var& terms) { return scale(sum(terms), 1.0 / static_cast<double>(terms.value().rows())); }

}  // namespace

DiagGaussian::DiagGaussian(Var mean_, Var log_std_) : mean(std::move(mean_)), log_std(std::move(log_std_)) {
  if (mean.value().rank() != 2) throw ShapeError("DiagGaussian: parameters must be [batch, dim]");
  require_same_shape(mean.shape(), log_std.shape(), "DiagGaussian");
}

DiagGaussian DiagGaussian::from_encoder(const Var& mean, const Var& raw_log_std) {
  return {mean, clamp(raw_log_std, kMinLogStd, kMaxLogStd)};
}

DiagGaussian DiagGaussian::standard(std::size_t rows, std::size_t dim) {
  return constant(Tensor::zeros({rows, dim}), Tensor::zeros({rows, dim}));
}

DiagGaussian DiagGaussian::constant(Tensor mean, Tensor log_std) {
  return {Var::constant(std::move(mean)), Var::constant(std::move(log_std))};
}

DiagGaussian stop_gradient(const DiagGaussian& q) { return {stop_gradient(q.mean), stop_gradient(q.log_std)}; }

Tensor standard_normal(std::size_t rows, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(rows * dim);
  for (double& v : values) v = normal(rng);
  return Tensor({rows, dim}, std::move(values));
}

Var reparam_sample(const DiagGaussian& q, const Tensor& eps) {
  require_same_shape(q.mean.shape(), eps.shape(), "reparam_sample");
  return q.mean + q.std_dev() * Var::constant(eps);
}

Var extended_reparam_sample(const DiagGaussian& primary, const DiagGaussian& conditional, const Tensor& eps) {
  require_same_shape(primary.mean.shape(), conditional.mean.shape(), "extended_reparam_sample");
  require_same_shape(primary.mean.shape(), eps.shape(), "extended_reparam_sample");
  const Var sigma = primary.std_dev();
  const Var shifted_mean = primary.mean + sigma * conditional.mean;
  const Var combined_std = sigma * conditional.std_dev();
  return shifted_mean + combined_std * Var::constant(eps);
}

DiagGaussian compose_posterior(const DiagGaussian& primary, const DiagGaussian& conditional) {
  require_same_shape(primary.mean.shape(), conditional.mean.shape(), "compose_posterior");
  return {primary.mean + primary.std_dev() * conditional.mean, primary.log_std + conditional.log_std};
}

Var kl_to_standard_normal_terms(const DiagGaussian& q) {
  // 0.5 * (mu^2 + sigma^2 - 1 - ln sigma^2)
  const Var two_log_std = scale(q.log_std, 2.0);
  return scale(add_scalar(square(q.mean) + exp(two_log_std) - two_log_std, -1.0), 0.5);
}

Var kl_diag_gaussians_terms(const DiagGaussian& q, const DiagGaussian& p) {
  require_same_shape(q.mean.shape(), p.mean.shape(), "kl_diag_gaussians");
  // ln(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2
  const Var numerator = exp(scale(q.log_std, 2.0)) + square(q.mean - p.mean);
  const Var denominator = scale(exp(scale(p.log_std, 2.0)), 2.0);
  return add_scalar((p.log_std - q.log_std) + numerator / denominator, -0.5);
}

Var cpvae_kl_terms(const DiagGaussian& primary, const DiagGaussian& conditional) {
  return kl_diag_gaussians_terms(compose_posterior(primary, conditional), conditional);
}

Var kl_to_standard_normal(const DiagGaussian& q) { return rows_mean(kl_to_standard_normal_terms(q)); }

Var kl_diag_gaussians(const DiagGaussian& q, const DiagGaussian& p) { return rows_mean(kl_diag_gaussians_terms(q, p)); }

Var cpvae_kl(const DiagGaussian& primary, const DiagGaussian& conditional) {
  return rows_mean(cpvae_kl_terms(primary, conditional));
}

}  // namespace lcpvae
