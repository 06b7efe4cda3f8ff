#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "mmcse/autograd.hpp"
#include "mmcse/error.hpp"
#include "mmcse/grad_check.hpp"
#include "mmcse/kernels.hpp"
#include "mmcse/rng.hpp"
#include "mmcse/tensor.hpp"

using namespace mmcse;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

}  // namespace

TEST(Tensor, ShapeAndAccess) {
  Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_EQ(t.row(1)[0], 4.0);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(t.reshaped({4}), DimensionError);
  EXPECT_EQ(t.reshaped({3, 2}).at(2, 1), 6.0);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(Seed(1));
  Tensor a = random_matrix(3, 3, rng);
  EXPECT_EQ(matmul(Tensor::identity(3), a), a);
}

TEST(Matmul, HandCheckedTwoByTwo) {
  Tensor out = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {1}}));
  EXPECT_EQ(out, Tensor::matrix({{2}, {4}}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(Seed(2));
  Tensor a = random_matrix(5, 7, rng), b = random_matrix(7, 3, rng);
  Tensor out = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(out.at(i, j), s, 1e-12);
    }
  Tensor nt = matmul_nt(a, a);
  Tensor tn = matmul_tn(b, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += a.at(i, k) * a.at(j, k);
      EXPECT_NEAR(nt.at(i, j), s, 1e-12);
    }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += b.at(k, i) * b.at(k, j);
      EXPECT_NEAR(tn.at(i, j), s, 1e-12);
    }
}

TEST(Matmul, RejectsMismatchedInnerDimension) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Softmax, UniformOnEqualLogits) {
  Tensor p = softmax_rows(Tensor::matrix({{0, 0}}));
  EXPECT_DOUBLE_EQ(p.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p.at(0, 1), 0.5);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  Tensor p = softmax_rows(Tensor::matrix({{1000, 0}}));
  EXPECT_TRUE(p.all_finite());
  EXPECT_DOUBLE_EQ(p.at(0, 0), 1.0);
  EXPECT_LT(p.at(0, 1), 1e-300);
}

TEST(Softmax, MatchesDirectFormula) {
  Rng rng(Seed(3));
  Tensor x = random_matrix(1, 9, rng);
  Tensor p = softmax_rows(x);
  double z = 0;
  for (double v : x.values()) z += std::exp(v);
  for (std::size_t j = 0; j < 9; ++j) EXPECT_NEAR(p.at(0, j), std::exp(x.at(0, j)) / z, 1e-12);
}

TEST(Cosine, AnalyticCases) {
  const std::vector<double> e1{1, 0}, e2{0, 1}, d{1, 1};
  EXPECT_DOUBLE_EQ(cosine_similarity(e1, e1), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(e1, e2), 0.0);
  EXPECT_NEAR(cosine_similarity(d, e1), std::numbers::sqrt2 / 2, 1e-15);
  const std::vector<double> zero{0, 0};
  EXPECT_THROW(cosine_similarity(zero, e1), DegenerateInputError);
  EXPECT_THROW(cosine_similarity(e1, std::vector<double>{1, 0, 0}), DimensionError);
}

TEST(LayerNorm, ConstantRowGoesToZero) {
  Tensor y = layer_norm(Tensor::matrix({{3, 3, 3}}), Tensor::ones({3}), Tensor::zeros({3}), 1e-6);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, StandardizesRow) {
  Tensor y = layer_norm(Tensor::matrix({{1, 2, 3}}), Tensor::ones({3}), Tensor::zeros({3}), 1e-12);
  EXPECT_NEAR(y.at(0, 0), -1.2247, 1e-4);
  EXPECT_NEAR(y.at(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(y.at(0, 2), 1.2247, 1e-4);
}

TEST(LayerNorm, MatchesMeanVarianceFormula) {
  Rng rng(Seed(4));
  Tensor x = random_matrix(1, 10, rng), g = random_matrix(1, 10, rng).reshaped({10}),
         b = random_matrix(1, 10, rng).reshaped({10});
  Tensor y = layer_norm(x, g, b, 1e-6);
  double mean = 0, var = 0;
  for (double v : x.values()) mean += v / 10;
  for (double v : x.values()) var += (v - mean) * (v - mean) / 10;
  for (std::size_t j = 0; j < 10; ++j) {
    EXPECT_NEAR(y.at(0, j), g[j] * (x.at(0, j) - mean) / std::sqrt(var + 1e-6) + b[j], 1e-9);
  }
}

TEST(Dropout, RateZeroIsIdentity) {
  Tensor m = dropout_mask({4, 5}, 0.0, Seed(9));
  for (double v : m.values()) EXPECT_EQ(v, 1.0);
}

TEST(Dropout, SameSeedSameMask) {
  EXPECT_EQ(dropout_mask({8, 8}, 0.3, Seed(5)), dropout_mask({8, 8}, 0.3, Seed(5)));
  EXPECT_NE(dropout_mask({8, 8}, 0.3, Seed(5)), dropout_mask({8, 8}, 0.3, Seed(6)));
}

TEST(Dropout, KeptFractionConcentrates) {
  // Binomial(1e6, 0.9): sd = 300, so [0.897, 0.903] is a 10-sigma band.
  Tensor m = dropout_mask({1000, 1000}, 0.1, Seed(42));
  std::size_t kept = 0;
  for (double v : m.values()) {
    if (v != 0.0) {
      ++kept;
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.9);
    }
  }
  const double frac = static_cast<double>(kept) / 1e6;
  EXPECT_GE(frac, 0.897);
  EXPECT_LE(frac, 0.903);
}

TEST(Rng, ChildKeysAreIndependentOfDrawOrder) {
  Seed root(42);
  Rng a(root.child("a"));
  const auto first = a.next_u64();
  Rng b(root.child("b"));
  for (int i = 0; i < 10; ++i) b.next_u64();
  Rng a2(root.child("a"));
  EXPECT_EQ(a2.next_u64(), first);
  EXPECT_NE(root.child("a").value(), root.child("b").value());
  EXPECT_NE(root.child(0).value(), root.child(1).value());
}

TEST(Rng, UniformAndBelowStayInRange) {
  Rng rng(Seed(7));
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(Seed(8));
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Autograd, QuadraticGradientIsIdentity) {
  Rng rng(Seed(10));
  Parameter p("p", random_matrix(3, 4, rng));
  auto v = ag::param(p);
  auto loss = ag::scale(ag::sum(ag::hadamard(v, v)), 0.5);
  ag::backward(loss);
  ASSERT_TRUE(p.has_grad());
  for (std::size_t i = 0; i < p.value().size(); ++i) EXPECT_DOUBLE_EQ(p.grad()[i], p.value()[i]);
}

TEST(Autograd, ConstantLossHasNoGraph) {
  EXPECT_THROW(ag::backward(ag::constant(Tensor::scalar(3.0))), NoGraphError);
}

TEST(Autograd, ParameterOutsideLossGetsNoGradient) {
  Parameter used("used", Tensor::matrix({{1, 2}})), unused("unused", Tensor::matrix({{1, 2}}));
  auto reached = ag::backward(ag::sum(ag::param(used)));
  EXPECT_EQ(reached.size(), 1u);
  EXPECT_FALSE(unused.has_grad());
  // A loss that depends on a parameter only through a zero factor still
  // produces an all-zero gradient.
  auto zero = ag::scale(ag::sum(ag::param(unused)), 0.0);
  ag::backward(zero);
  for (double g : unused.grad().values()) EXPECT_EQ(g, 0.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  Parameter p("p", Tensor::matrix({{1, 2}}));
  ag::NoGradGuard guard;
  EXPECT_FALSE(ag::param(p).requires_grad());
}

TEST(GradCheck, QuadraticIsNearlyExact) {
  Rng rng(Seed(11));
  Parameter p("p", random_matrix(4, 4, rng));
  Parameter* params[] = {&p};
  auto report = grad_check([&] {
    auto v = ag::param(p);
    return ag::sum(ag::hadamard(v, v));
  }, params);
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_relative_error, 1e-8);
}

TEST(GradCheck, EveryOpMatchesFiniteDifferences) {
  Rng rng(Seed(12));
  Parameter x("x", random_matrix(4, 6, rng));
  Parameter w("w", random_matrix(6, 6, rng));
  Parameter g("g", random_matrix(1, 6, rng).reshaped({6}));
  Parameter b("b", random_matrix(1, 6, rng).reshaped({6}));
  Parameter* params[] = {&x, &w, &g, &b};
  const Tensor mask = dropout_mask({4, 6}, 0.2, Seed(3));
  auto report = grad_check([&] {
    auto h = ag::layer_norm(ag::param(x), ag::param(g), ag::param(b), 1e-6);
    h = ag::gelu(ag::add_bias(ag::matmul(h, ag::param(w)), ag::param(b)));
    h = ag::dropout(h, mask);
    auto s = ag::softmax_rows(ag::matmul_nt(h, ag::param(x)));
    auto n = ag::l2_normalize_rows(ag::concat_rows(h, ag::gather_rows(ag::param(x), {3, 0})));
    return ag::add(ag::sum(ag::hadamard(s, s)), ag::sum(ag::sub(n, ag::scale(n, 0.3))));
  }, params);
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}

TEST(GradCheck, SelfAttentionMatchesFiniteDifferences) {
  Rng rng(Seed(13));
  // Two sequences of length 3 (second one padded after 2 tokens), 2 heads of width 2.
  Parameter qkv("qkv", random_matrix(6, 12, rng));
  Parameter* params[] = {&qkv};
  ag::AttentionLayout layout{2, 3, 2, {3, 2}};
  const Tensor mask = dropout_mask({2 * 2 * 3, 3}, 0.2, Seed(4));
  auto report = grad_check([&] {
    auto out = ag::self_attention(ag::param(qkv), layout, mask);
    return ag::sum(ag::hadamard(out, out));
  }, params);
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}

TEST(GradCheck, DetectsPerturbedGradient) {
  Rng rng(Seed(14));
  Parameter p("p", random_matrix(3, 3, rng));
  Parameter* params[] = {&p};
  GradCheckOptions options;
  options.analytic_perturbation = 1e-3;
  auto report = grad_check([&] {
    auto v = ag::param(p);
    return ag::sum(ag::hadamard(v, v));
  }, params, options);
  EXPECT_FALSE(report.passed);
}

TEST(GradCheck, RejectsNondeterministicLoss) {
  Parameter p("p", Tensor::matrix({{1.0}}));
  Parameter* params[] = {&p};
  int calls = 0;
  EXPECT_THROW(grad_check([&] {
    ++calls;
    return ag::scale(ag::sum(ag::param(p)), static_cast<double>(calls));
  }, params), DeterminismError);
}
