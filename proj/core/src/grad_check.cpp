#include "mmcse/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mmcse/error.hpp"

namespace mmcse {

GradCheckReport grad_check(const LossFunction& loss_fn, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw InvalidArgument("grad_check step must be positive");

  const double first = loss_fn().value().item();
  const double second = loss_fn().value().item();
  if (first != second) {
    throw DeterminismError("loss function is not deterministic: " + std::to_string(first) + " vs " +
                           std::to_string(second));
  }

  zero_grads(params);
  backward(loss_fn());
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad());
  zero_grads(params);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    ParameterGradReport entry;
    entry.name = p.name();
    auto values = p.value().values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double plus = loss_fn().value().item();
      values[i] = saved - options.step;
      const double minus = loss_fn().value().item();
      values[i] = saved;

      const double numeric = (plus - minus) / (2.0 * options.step);
      const double exact = analytic[k][i] + options.analytic_perturbation;
      const double abs_err = std::abs(exact - numeric);
      const double denom = std::max({std::abs(exact), std::abs(numeric), options.denominator_floor});
      const double rel = abs_err / denom;
      entry.max_relative_error = std::max(entry.max_relative_error, rel);
      entry.max_absolute_error = std::max(entry.max_absolute_error, abs_err);
      if (!(rel < options.tolerance)) ++entry.flagged;
      ++entry.checked;
    }
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    if (entry.flagged) report.passed = false;
    report.parameters.push_back(std::move(entry));
  }
  return report;
}

}  // namespace mmcse
