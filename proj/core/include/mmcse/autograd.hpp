#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmcse/tensor.hpp"

namespace mmcse {

// A named trainable tensor with its accumulated gradient.
class Parameter {
 public:
  Parameter(std::string name, Tensor value);

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  const Tensor& grad() const { return grad_; }
  Tensor& grad() { return grad_; }

  // True once a backward pass has reached this parameter since the last
  // zero_grad().
  bool has_grad() const { return has_grad_; }
  void accumulate_grad(const Tensor& g);
  void zero_grad();

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
  bool has_grad_ = false;
};

void zero_grads(std::span<Parameter* const> params);

namespace ag {

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;
  Parameter* parameter = nullptr;
  bool requires_grad = false;

  Tensor& grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
};

// Handle to a recorded value. Cheap to copy; copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// While alive, param() returns constants, so forward passes record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// A value that takes no gradient.
Var constant(Tensor value);
// A leaf whose gradient flows into `p` on backward().
Var param(Parameter& p);

// Reverse-mode sweep from a scalar. Accumulates d(loss)/d(parameter) into every
// Parameter reached and returns those parameters (first-reached order).
// Throws NoGraphError if the scalar does not depend on any parameter.
std::vector<Parameter*> backward(const Var& loss);

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
// x is m x n; bias holds n elements and is broadcast over rows.
Var add_bias(const Var& x, const Var& bias);
Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps);
Var softmax_rows(const Var& x);
// Elementwise product with a fixed mask (see dropout_mask).
Var dropout(const Var& x, const Tensor& mask);
// out.row(r) = x.row(index[r]).
Var gather_rows(const Var& x, std::vector<std::size_t> index);
// Stacks the rows of a above the rows of b.
Var concat_rows(const Var& a, const Var& b);
Var l2_normalize_rows(const Var& x);
Var sum(const Var& x);

struct AttentionLayout {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::size_t heads = 1;
  // Valid prefix length per example; keys past it are masked out.
  std::vector<std::size_t> lengths;
};

// Multi-head scaled dot-product self-attention over packed [Q | K | V]
// columns. qkv is (batch*seq_len) x 3h with example-major rows; the result
// is (batch*seq_len) x h with heads concatenated. `prob_mask`, when given,
// multiplies the attention probabilities and has shape
// (batch*heads*seq_len) x seq_len.
Var self_attention(const Var& qkv, const AttentionLayout& layout, const std::optional<Tensor>& prob_mask);

// Per-row log-ratio used by every contrastive objective:
//   out[i] = logsumexp_{j in den_i} logits[i,j] - logsumexp_{j in num_i} logits[i,j]
// Masks are row-major N x M with nonzero marking membership. Every row needs
// at least one member in each set.
Var contrastive_log_ratio(const Var& logits, std::vector<unsigned char> numerator_mask,
                          std::vector<unsigned char> denominator_mask);

}  // namespace ag
}  // namespace mmcse
