#pragma once

#include <functional>
#include <span>
#include <string>

#include "codelid/nn/graph.hpp"
#include "codelid/nn/tensor.hpp"

namespace codelid::nn {

using LossFn = std::function<Var(Graph<double>&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of `loss` with central differences
// (f(p + eps) - f(p - eps)) / (2 eps) for every element of `params`.
// Relative error uses the denominator max(|analytic|, |numeric|, floor). The
// floor sits well above central-difference roundoff (~1e-11 at eps 1e-5), so
// gradients that are identically zero, such as attention key biases, compare
// as equal. eps must lie in [1e-7, 1e-3]; a non-finite loss at any probe throws.
inline constexpr double kGradCheckFloor = 1e-6;

GradCheckResult grad_check_detailed(const LossFn& loss, std::span<Parameter<double>* const> params,
                                    double eps = 1e-5, double floor = kGradCheckFloor);

inline double grad_check(const LossFn& loss, std::span<Parameter<double>* const> params, double eps = 1e-5) {
  return grad_check_detailed(loss, params, eps).max_relative_error;
}

}  // namespace codelid::nn
