#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmcse/autograd.hpp"

namespace mmcse {

struct AdamWOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
// Gradients are zeroed after each step.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWOptions options);

  // Throws UninitializedGradientError if any parameter was not reached by a
  // backward pass since its last step.
  void step();

  std::uint64_t step_count() const { return t_; }
  const AdamWOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  std::span<Parameter* const> parameters() const { return params_; }
  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Parameter*> params_;
  AdamWOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

// Rescales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace mmcse
