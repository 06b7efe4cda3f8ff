#include "mmcse/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "mmcse/error.hpp"

namespace mmcse {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " expects a matrix, got " + shape_string(t.shape()));
  }
}

}  // namespace

void gemm(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b, Tensor& out,
          bool accumulate) {
  require_matrix(a, "gemm");
  require_matrix(b, "gemm");
  std::size_t m = transpose_a ? a.cols() : a.rows();
  std::size_t k = transpose_a ? a.rows() : a.cols();
  std::size_t kb = transpose_b ? b.cols() : b.rows();
  std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + (transpose_a ? "^T" : "") +
                         " x " + shape_string(b.shape()) + (transpose_b ? "^T" : ""));
  }
  if (out.rank() != 2 || out.rows() != m || out.cols() != n) {
    throw DimensionError("matmul output " + shape_string(out.shape()) + " does not match [" +
                         std::to_string(m) + "x" + std::to_string(n) + "]");
  }
  ConstMap ma(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
  ConstMap mb(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
  MutMap mo(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (!accumulate) mo.setZero();
  if (!transpose_a && !transpose_b) {
    mo.noalias() += ma * mb;
  } else if (!transpose_a && transpose_b) {
    mo.noalias() += ma * mb.transpose();
  } else if (transpose_a && !transpose_b) {
    mo.noalias() += ma.transpose() * mb;
  } else {
    mo.noalias() += ma.transpose() * mb.transpose();
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()});
  gemm(a, false, b, false, out, false);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  Tensor out({a.rows(), b.rows()});
  gemm(a, false, b, true, out, false);
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
  }
  Tensor out({a.cols(), b.cols()});
  gemm(a, true, b, false, out, false);
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  Tensor out(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine_similarity: vectors of length " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw DegenerateInputError("cosine_similarity: zero-norm vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t h = x.cols();
  if (h < 2) throw DimensionError("layer_norm needs at least 2 features");
  if (gain.size() != h || bias.size() != h) {
    throw DimensionError("layer_norm: gain/bias of " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " for rows of width " + std::to_string(h));
  }
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(h);
    double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < h; ++j) o[j] = (in[j] - mean) * inv * gain[j] + bias[j];
  }
  return out;
}

Tensor dropout_mask(const Shape& shape, double rate, Seed seed) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw InvalidArgument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  Tensor mask = Tensor::ones(shape);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  Rng rng(seed);
  for (auto& m : mask.values()) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
}

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

}  // namespace mmcse
