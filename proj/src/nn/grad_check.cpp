#include "codelid/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "codelid/error.hpp"

namespace codelid::nn {

namespace {

double evaluate(const LossFn& loss) {
  Graph<double> g;
  const double value = g.value(loss(g))[0];
  if (!std::isfinite(value)) throw DataError("grad_check: non-finite loss at a probe point");
  return value;
}

}  // namespace

GradCheckResult grad_check_detailed(const LossFn& loss, std::span<Parameter<double>* const> params, double eps,
                                    double floor) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check eps must lie in [1e-7, 1e-3]");
  if (!(floor > 0.0)) throw std::invalid_argument("grad_check floor must be positive");

  for (auto* p : params) p->zero_grad();
  {
    Graph<double> g;
    Var out = loss(g);
    if (!std::isfinite(g.value(out)[0])) throw DataError("grad_check: non-finite loss");
    g.backward(out);
  }

  GradCheckResult result;
  for (auto* p : params) {
    const std::vector<double> analytic = p->grad.data;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = evaluate(loss);
      p->value[i] = saved - eps;
      const double down = evaluate(loss);
      p->value[i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      const double err = std::abs(analytic[i] - numeric) / denom;
      ++result.checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.analytic_at_worst = analytic[i];
        result.numeric_at_worst = numeric;
        result.worst_parameter = p->name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace codelid::nn
