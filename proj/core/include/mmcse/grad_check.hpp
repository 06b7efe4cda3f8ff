#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmcse/autograd.hpp"

namespace mmcse {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error uses max(|analytic|, |numeric|, denominator_floor) so that
  // entries whose true gradient is ~0 are judged on absolute error instead.
  double denominator_floor = 1e-3;
  // Test hook: added to every analytic gradient entry before comparison, to
  // confirm the harness notices a wrong gradient.
  double analytic_perturbation = 0.0;
};

struct ParameterGradReport {
  std::string name;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t flagged = 0;  // entries above tolerance
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<ParameterGradReport> parameters;
  double max_relative_error = 0.0;
  bool passed = true;
};

using LossFunction = std::function<ag::Var()>;

// Compares the gradients backward() produces against central differences
// (f(x+e) - f(x-e)) / 2e, element by element. The loss function must rebuild
// its graph from the current parameter values on every call and be
// deterministic; two evaluations at the same point that differ raise
// DeterminismError.
GradCheckReport grad_check(const LossFunction& loss_fn, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace mmcse
