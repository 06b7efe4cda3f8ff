#include <vector>

#include <benchmark/benchmark.h>

#include "mmcse/autograd.hpp"
#include "mmcse/data.hpp"
#include "mmcse/kernels.hpp"
#include "mmcse/losses.hpp"
#include "mmcse/metrics.hpp"
#include "mmcse/optimizer.hpp"
#include "mmcse/training.hpp"

using namespace mmcse;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng{Seed(seed)};
  Tensor t({rows, cols});
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

std::vector<Sentence> corpus_batch(std::size_t n) {
  std::vector<Sentence> out;
  for (const auto& s : gen_text(SyntheticCorpusSpec{})) {
    if (out.size() == n) break;
    out.push_back(s.tokens);
  }
  return out;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, 64, 1), b = random_matrix(64, 3 * 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 64 * 192));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(1024);

void BM_TextUnsupLossWithGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Parameter a("a", random_matrix(n, 64, 3)), b("b", random_matrix(n, 64, 4));
  for (auto _ : state) {
    const auto loss = text_unsup_loss({ag::param(a)}, {ag::param(b)}, 0.05);
    ag::backward(loss.total);
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_TextUnsupLossWithGradient)->Arg(64)->Arg(256);

void BM_ModalSupconLoss(benchmark::State& state) {
  const std::size_t n = 48;
  const Tensor a = random_matrix(n, 64, 5), b = random_matrix(n, 64, 6);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(modal_supcon_loss({ag::constant(a)}, {ag::constant(b)}, labels, 0.07).value());
  }
}
BENCHMARK(BM_ModalSupconLoss);

void BM_EmbedSentences(benchmark::State& state) {
  Encoder model(EncoderConfig{}, Seed(42));
  const auto batch = corpus_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(embed_sentences(model, batch));
}
BENCHMARK(BM_EmbedSentences)->Arg(64)->Arg(500);

// One unsupervised text step at the desk configuration: two encodings,
// loss, backward and an optimizer update.
void BM_TextTrainStep(benchmark::State& state) {
  Encoder model(EncoderConfig{}, Seed(42));
  TrainConfig config;
  AdamW optimizer(model.path_parameters(Frontend::Text), AdamWOptions{});
  const auto batch = corpus_batch(config.text_batch_size);
  std::uint64_t step = 0;
  for (auto _ : state) {
    const auto loss = text_batch_loss(model, batch, config, Seed(7).child("step", ++step));
    benchmark::DoNotOptimize(apply_update(loss.total, optimizer, config));
  }
}
BENCHMARK(BM_TextTrainStep)->Unit(benchmark::kMillisecond);

void BM_Uniformity(benchmark::State& state) {
  const Tensor x = random_matrix(static_cast<std::size_t>(state.range(0)), 64, 8);
  for (auto _ : state) benchmark::DoNotOptimize(uniformity(x));
}
BENCHMARK(BM_Uniformity)->Arg(1000);

void BM_Spearman(benchmark::State& state) {
  const Tensor x = random_matrix(2, static_cast<std::size_t>(state.range(0)), 9);
  for (auto _ : state) benchmark::DoNotOptimize(spearman(x.row(0), x.row(1)));
}
BENCHMARK(BM_Spearman)->Arg(500);

}  // namespace

BENCHMARK_MAIN();
