#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "lcpvae/autodiff.hpp"

namespace lcpvae {

struct GradCheckResult {
  double max_relative_error = 0.0;
  // Location of the worst entry.
  std::size_t parameter = 0;
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of `f` against five-point central
/// differences with step `eps`.
///
/// `f` rebuilds the graph from the current parameter values and must be
/// deterministic; it is evaluated twice at the base point and a
/// NumericalError is thrown if the two results differ. The error for each
/// entry is |analytic - numeric| / max(|analytic|, |numeric|, floor), so
/// gradients smaller than `floor` are compared in absolute terms.
GradCheckResult grad_check(const std::function<Var()>& f, std::span<Var> params, double eps = 1e-4,
                           double floor = 1e-4);

}  // namespace lcpvae
