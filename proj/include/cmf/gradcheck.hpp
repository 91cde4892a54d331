#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cmf/error.hpp"
#include "cmf/tensor.hpp"

namespace cmf {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Compares reverse-mode gradients of a deterministic scalar function against
// central finite differences over every entry of every parameter. Returns the
// maximum relative error |analytic - numeric| / max(|analytic|, |numeric|,
// 1e-12).
inline GradCheckResult finite_difference_check(
    const std::function<Tensor()>& f, const ParamList& params,
    double eps = 1e-5) {
  if (!(eps > 0.0) || eps > 1e-3) {
    throw ConfigError("finite_difference_check eps must lie in (0, 1e-3], got " +
                      std::to_string(eps));
  }

  for (const auto& [name, p] : params) Tensor(p).zero_grad();
  Tensor loss = f();
  if (!std::isfinite(loss.item())) {
    throw NumericalError("loss is non-finite before perturbation");
  }
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) analytic.push_back(p.grad());

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::string& name = params[pi].first;
    Tensor p = params[pi].second;  // handle shares storage
    auto& values = p.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double lp = f().item();
      values[i] = saved - eps;
      const double lm = f().item();
      values[i] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        throw NumericalError("non-finite loss while perturbing parameter '" +
                             name + "' entry " + std::to_string(i));
      }
      const double numeric = (lp - lm) / (2.0 * eps);
      const double exact = analytic[pi][i];
      const double denom =
          std::max({std::fabs(exact), std::fabs(numeric), 1e-12});
      const double rel = std::fabs(exact - numeric) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace cmf
