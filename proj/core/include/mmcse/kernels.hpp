#pragma once

#include <span>

#include "mmcse/rng.hpp"
#include "mmcse/tensor.hpp"

// Value-level numeric kernels. The autograd layer calls these for its forward
// passes; they are also usable directly on plain tensors.
namespace mmcse {

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a^T * b
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// out (+)= op(a) * op(b). `out` must already have the result shape.
void gemm(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b, Tensor& out,
          bool accumulate);

// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& x);

// dot(u,v) / (|u| |v|), clamped to [-1, 1]. Throws DegenerateInputError on a
// zero-norm argument.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Per-row standardization followed by gain and bias. x is m x h, gain and bias
// have h elements.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
// 1/(1-rate). Pure function of (shape, rate, seed).
Tensor dropout_mask(const Shape& shape, double rate, Seed seed);

double gelu(double x);
double gelu_derivative(double x);

}  // namespace mmcse
