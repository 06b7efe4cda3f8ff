#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mmcse::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct CheckOptions {
  std::uint64_t seed = 42;
  std::size_t instances = 100;
  // Added to every analytic gradient entry; a nonzero value must make the
  // gradient check fail.
  double gradient_perturbation = 0.0;
};

// Central differences against backward() for every loss, both on leaf
// representations and end to end through the text, image and audio paths.
CheckResult check_gradients(const CheckOptions& options);
// Library losses against the scalar reference implementations.
CheckResult check_loss_oracles(const CheckOptions& options);
// Spearman, alignment, uniformity and top-k against the reference versions.
CheckResult check_metric_oracles(const CheckOptions& options);
// simclr_i = ln(1 + exp(supcon_i)) when every label in the batch is distinct.
CheckResult check_bridge_identity(const CheckOptions& options);
// Single-anchor, identical-row, rescaling and permutation properties.
CheckResult check_analytic_values(const CheckOptions& options);
// Full-scale sequence lengths from configuration alone.
CheckResult check_shape_contracts(const CheckOptions& options);
// Two short training runs and two evaluations give identical bits.
CheckResult check_determinism(const CheckOptions& options);

std::vector<CheckResult> run_selftest(const CheckOptions& options);

}  // namespace mmcse::cli
