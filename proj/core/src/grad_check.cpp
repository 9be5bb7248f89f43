#include "lcpvae/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lcpvae/error.hpp"

namespace lcpvae {

GradCheckResult grad_check(const std::function<Var()>& f, std::span<Var> params, double eps, double floor) {
  if (!(eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  if (!(floor > 0.0)) throw ConfigError("grad_check: floor must be positive");
  const Var root = f();
  const Var again = f();
  if (!root.value().identical(again.value())) {
    throw NumericalError("grad_check: function is not deterministic at the base point");
  }
  // Parameters the graph never reaches keep a zero gradient.
  for (auto& p : params) p.zero_grad();
  backward(root);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_value();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return f().value().item();
      };
      // Five-point central stencil, truncation error O(eps^4).
      const double numeric = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
      values[i] = saved;
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double err = std::abs(a - numeric) / denom;
      if (err > result.max_relative_error) result = {err, k, i, a, numeric};
    }
  }
  return result;
}

}  // namespace lcpvae
