#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "mmcse/error.hpp"
#include "mmcse/grad_check.hpp"
#include "mmcse/losses.hpp"
#include "mmcse_reference/reference.hpp"

using namespace mmcse;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

Representation rep(const Tensor& t) { return {ag::constant(t)}; }
Representation rep(Parameter& p) { return {ag::param(p)}; }

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(LossConfig, DefaultsAndValidation) {
  LossConfig c;
  EXPECT_EQ(c.tau_text, 0.05);
  EXPECT_EQ(c.tau_modal, 0.07);
  EXPECT_EQ(c.omega_modal, 1.0);
  EXPECT_EQ(c.modal_variant, ModalLossVariant::SupCon);
  EXPECT_NO_THROW(c.validate());
  c.tau_text = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = LossConfig{};
  c.omega_modal = -1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(TextUnsup, SingleExampleIsZero) {
  Rng rng(Seed(1));
  Tensor a = random_matrix(1, 8, rng), b = random_matrix(1, 8, rng);
  EXPECT_EQ(text_unsup_loss(rep(a), rep(b), 0.05).value(), 0.0);
}

TEST(TextUnsup, IdenticalRowsGiveNLogN) {
  Tensor a({5, 4}, 0.3);
  EXPECT_NEAR(text_unsup_loss(rep(a), rep(a), 0.05).value(), 5 * std::log(5.0), 1e-9);
}

TEST(TextUnsup, MatchesBruteForceOracle) {
  Rng rng(Seed(2));
  Tensor a = random_matrix(5, 8, rng), b = random_matrix(5, 8, rng);
  auto loss = text_unsup_loss(rep(a), rep(b), 0.05);
  auto oracle = reference::text_unsup(a, b, 0.05);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(loss.per_anchor[i], oracle[i], 1e-10);
  EXPECT_NEAR(loss.value(), total(oracle), 1e-10);
  EXPECT_NEAR(text_unsup_loss(rep(a), rep(b), 0.05, Reduction::Mean).value(), total(oracle) / 5, 1e-10);
}

TEST(TextUnsup, RejectsMismatchedViews) {
  Rng rng(Seed(3));
  EXPECT_THROW(text_unsup_loss(rep(random_matrix(3, 4, rng)), rep(random_matrix(4, 4, rng)), 0.05), AlignmentError);
  EXPECT_THROW(text_unsup_loss(rep(random_matrix(3, 4, rng)), rep(random_matrix(3, 5, rng)), 0.05), AlignmentError);
}

TEST(TextSup, OneExampleClosedForm) {
  // h+ = h, h- orthogonal: -log(e^{1/tau} / (e^{1/tau} + e^0)) = log(1 + e^{-20}).
  Tensor h = Tensor::matrix({{1, 0}}), neg = Tensor::matrix({{0, 1}});
  const double expected = std::log1p(std::exp(-20.0));
  EXPECT_NEAR(expected, 2.06e-9, 0.01e-9);
  EXPECT_NEAR(text_sup_loss(rep(h), rep(h), rep(neg), 0.05).value(), expected, 1e-15);
}

TEST(TextSup, NegativesEqualToPositivesCostAtLeastLn2) {
  Rng rng(Seed(4));
  Tensor a = random_matrix(4, 6, rng), p = random_matrix(4, 6, rng);
  auto loss = text_sup_loss(rep(a), rep(p), rep(p), 0.05);
  for (double v : loss.per_anchor) EXPECT_GE(v, std::log(2.0) - 1e-12);
}

TEST(TextSup, MatchesBruteForceOracle) {
  Rng rng(Seed(5));
  Tensor a = random_matrix(4, 8, rng), p = random_matrix(4, 8, rng), n = random_matrix(4, 8, rng);
  auto loss = text_sup_loss(rep(a), rep(p), rep(n), 0.05);
  auto oracle = reference::text_sup(a, p, n, 0.05);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(loss.per_anchor[i], oracle[i], 1e-10);
  EXPECT_NEAR(loss.value(), total(oracle), 1e-10);
}

TEST(ModalSupCon, TwoExampleClosedForm) {
  // f1' = f1'' = e1, f2'' = e2 (orthogonal to f1'): anchor 1 has numerator
  // e^{1/tau} and denominator e^{0}, so its term is -1/0.07.
  Tensor a = Tensor::matrix({{1, 0}, {0, 1}}), b = Tensor::matrix({{1, 0}, {0, 1}});
  const std::vector<int> labels{0, 1};
  auto loss = modal_supcon_loss(rep(a), rep(b), labels, 0.07);
  EXPECT_NEAR(loss.per_anchor[0], -1.0 / 0.07, 1e-12);
  EXPECT_NEAR(loss.per_anchor[0], -14.2857, 1e-4);
}

TEST(ModalSupCon, MatchesBruteForceOracle) {
  Rng rng(Seed(6));
  Tensor a = random_matrix(6, 8, rng), b = random_matrix(6, 8, rng);
  const std::vector<int> labels{0, 1, 2, 0, 1, 2};
  auto loss = modal_supcon_loss(rep(a), rep(b), labels, 0.07);
  auto oracle = reference::modal_supcon(a, b, labels, 0.07);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(loss.per_anchor[i], oracle[i], 1e-10);
  EXPECT_NEAR(loss.value(), total(oracle), 1e-10);
}

TEST(ModalSupCon, SingleClassBatchHasEmptyDenominator) {
  Rng rng(Seed(7));
  Tensor a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
  const std::vector<int> labels{1, 1, 1};
  EXPECT_THROW(modal_supcon_loss(rep(a), rep(b), labels, 0.07), EmptyDenominatorError);
  const std::vector<int> short_labels{1, 2};
  EXPECT_THROW(modal_supcon_loss(rep(a), rep(b), short_labels, 0.07), AlignmentError);
}

TEST(ModalSimclr, SingleExampleIsZeroAndSharesTextFormula) {
  Rng rng(Seed(8));
  Tensor one_a = random_matrix(1, 4, rng), one_b = random_matrix(1, 4, rng);
  EXPECT_EQ(modal_simclr_loss(rep(one_a), rep(one_b), 0.07).value(), 0.0);
  Tensor a = random_matrix(5, 8, rng), b = random_matrix(5, 8, rng);
  EXPECT_NEAR(modal_simclr_loss(rep(a), rep(b), 0.07).value(), text_unsup_loss(rep(a), rep(b), 0.07).value(), 1e-12);
  auto oracle = reference::modal_simclr(a, b, 0.07);
  EXPECT_NEAR(modal_simclr_loss(rep(a), rep(b), 0.07).value(), total(oracle), 1e-10);
}

TEST(Bridge, DistinctLabelsGiveSoftplusIdentity) {
  Rng rng(Seed(9));
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    Tensor a = random_matrix(n, 6, rng), b = random_matrix(n, 6, rng);
    std::vector<int> labels(n);
    std::iota(labels.begin(), labels.end(), 0);
    auto sup = modal_supcon_loss(rep(a), rep(b), labels, 0.07);
    auto sim = modal_simclr_loss(rep(a), rep(b), 0.07);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(sim.per_anchor[i], std::log1p(std::exp(sup.per_anchor[i])), 1e-9);
    }
  }
}

TEST(Losses, InvariantToPositiveRowRescaling) {
  Rng rng(Seed(10));
  Tensor a = random_matrix(5, 6, rng), b = random_matrix(5, 6, rng);
  Tensor a2 = a;
  for (std::size_t r = 0; r < 5; ++r)
    for (double& v : a2.row(r)) v *= 0.1 + 3.0 * static_cast<double>(r);
  EXPECT_NEAR(text_unsup_loss(rep(a), rep(b), 0.05).value(), text_unsup_loss(rep(a2), rep(b), 0.05).value(), 1e-10);
}

TEST(Losses, InvariantToBatchPermutation) {
  Rng rng(Seed(11));
  Tensor a = random_matrix(4, 6, rng), b = random_matrix(4, 6, rng), n = random_matrix(4, 6, rng);
  const std::size_t perm[] = {2, 0, 3, 1};
  auto permute = [&](const Tensor& t) {
    Tensor out(t.shape());
    for (std::size_t r = 0; r < 4; ++r) std::copy(t.row(perm[r]).begin(), t.row(perm[r]).end(), out.row(r).begin());
    return out;
  };
  EXPECT_NEAR(text_sup_loss(rep(a), rep(b), rep(n), 0.05).value(),
              text_sup_loss(rep(permute(a)), rep(permute(b)), rep(permute(n)), 0.05).value(), 1e-12);
}

TEST(Combine, OmegaScalesModalTerm) {
  auto t = ag::constant(Tensor::scalar(1.0)), m = ag::constant(Tensor::scalar(1.0));
  EXPECT_EQ(combine(t, m, 1.0).value().item(), 2.0);
  EXPECT_EQ(combine(t, m, 0.0).value().item(), 1.0);
  EXPECT_THROW(combine(t, m, -0.5), InvalidArgument);
}

TEST(Combine, GradientIsWeightedSumOfParts) {
  Rng rng(Seed(12));
  Parameter shared("shared", random_matrix(4, 6, rng));
  Tensor other = random_matrix(4, 6, rng);
  const std::vector<int> labels{0, 1, 0, 1};
  const double omega = 0.7;
  auto text = [&] { return text_unsup_loss(rep(shared), rep(other), 0.05).total; };
  auto modal = [&] { return modal_supcon_loss(rep(shared), rep(other), labels, 0.07).total; };
  ag::backward(text());
  Tensor g_text = shared.grad();
  shared.zero_grad();
  ag::backward(modal());
  Tensor g_modal = shared.grad();
  shared.zero_grad();
  ag::backward(combine(text(), modal(), omega));
  for (std::size_t i = 0; i < g_text.size(); ++i) {
    EXPECT_NEAR(shared.grad()[i], g_text[i] + omega * g_modal[i], 1e-10);
  }
  Parameter* params[] = {&shared};
  EXPECT_TRUE(grad_check([&] { return combine(text(), modal(), omega); }, params).passed);
}

TEST(GradCheck, TextLossOnFourSentenceBatch) {
  Rng rng(Seed(13));
  Parameter a("a", random_matrix(4, 8, rng)), b("b", random_matrix(4, 8, rng));
  Parameter* params[] = {&a, &b};
  auto report = grad_check([&] { return text_unsup_loss(rep(a), rep(b), 0.05).total; }, params);
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_relative_error, 1e-4);
}

TEST(GradCheck, SupConOnSixImageBatch) {
  Rng rng(Seed(14));
  Parameter a("a", random_matrix(6, 8, rng)), b("b", random_matrix(6, 8, rng));
  Parameter* params[] = {&a, &b};
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  auto report = grad_check([&] { return modal_supcon_loss(rep(a), rep(b), labels, 0.07).total; }, params);
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_relative_error, 1e-4);
}

TEST(GradCheck, SupervisedAndSimclrLosses) {
  Rng rng(Seed(15));
  Parameter a("a", random_matrix(5, 8, rng)), p("p", random_matrix(5, 8, rng)), n("n", random_matrix(5, 8, rng));
  Parameter* params[] = {&a, &p, &n};
  EXPECT_TRUE(grad_check([&] { return text_sup_loss(rep(a), rep(p), rep(n), 0.05).total; }, params).passed);
  Parameter* two[] = {&a, &p};
  EXPECT_TRUE(grad_check([&] { return modal_simclr_loss(rep(a), rep(p), 0.07, Reduction::Mean).total; }, two).passed);
}
