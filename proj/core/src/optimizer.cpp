#include "mmcse/optimizer.hpp"

#include <cmath>

#include "mmcse/error.hpp"

namespace mmcse {

AdamW::AdamW(std::vector<Parameter*> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0.0)) throw InvalidArgument("AdamW learning rate must be positive");
  if (!(options_.beta1 >= 0.0 && options_.beta1 < 1.0) || !(options_.beta2 >= 0.0 && options_.beta2 < 1.0)) {
    throw InvalidArgument("AdamW betas must lie in [0, 1)");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto* p : params_) {
    m_.emplace_back(p->value().shape());
    v_.emplace_back(p->value().shape());
  }
}

void AdamW::step() {
  for (auto* p : params_) {
    if (!p->has_grad()) {
      throw UninitializedGradientError("AdamW step: parameter '" + p->name() + "' has no gradient");
    }
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = options_.learning_rate, wd = options_.weight_decay, eps = options_.eps;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto theta = params_[k]->value().values();
    auto g = params_[k]->grad().values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * theta[i]);
    }
    params_[k]->zero_grad();
  }
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params) {
    for (double g : p->grad().values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto* p : params) {
      for (auto& g : p->grad().values()) g *= factor;
    }
  }
  return norm;
}

}  // namespace mmcse
