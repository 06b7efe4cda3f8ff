#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmcse/data.hpp"
#include "mmcse/encoder.hpp"
#include "mmcse/tensor.hpp"

namespace mmcse {

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> values);

// Pearson correlation of fractional ranks. Throws UndefinedCorrelationError
// when either input has zero rank variance.
double spearman(std::span<const double> pred, std::span<const double> gold);

// Mean squared distance between row i of `a` and row i of `b`, after both
// are L2-normalized.
double alignment(const Tensor& a, const Tensor& b);

struct Uniformity {
  double raw = 0.0;  // mean over distinct pairs of exp(-2 |x_i - x_j|^2)
  double log = 0.0;  // ln(raw)
};

// Over L2-normalized rows; needs at least two rows.
Uniformity uniformity(const Tensor& reps);

struct RetrievalHit {
  std::size_t index = 0;
  double score = 0.0;
};

// Corpus rows ordered by cosine similarity to the query, descending; equal
// scores keep the lower index first.
std::vector<RetrievalHit> retrieve_topk(std::span<const double> query, const Tensor& corpus, std::size_t k = 3);

struct RetrievalRow {
  std::size_t query = 0;
  std::vector<RetrievalHit> hits;
};

struct MetricStat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
};

// Mean and sample standard deviation; needs at least two values.
MetricStat mean_std(std::span<const double> values);

struct ReportMetadata {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string config_hash;
};

struct MetricsReport {
  double spearman = 0.0;
  double alignment = 0.0;
  double uniformity_log = 0.0;
  double uniformity_raw = 0.0;
  std::optional<std::vector<RetrievalRow>> retrieval;
  std::optional<std::map<std::string, MetricStat>> aggregate;
  ReportMetadata metadata;

  // Stable key order; doubles are printed in shortest round-trip form.
  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

// Mean/std of spearman, alignment, uniformity_log and uniformity_raw across
// reports. The result's scalar fields hold the means.
MetricsReport aggregate(std::span<const MetricsReport> reports);

struct StsEvalOptions {
  // Pairs with gold >= threshold count as positives for alignment; the
  // default is the top quartile of the 0-5 gold scale.
  double positive_threshold = 3.75;
};

// Eval-mode embeddings of both sides of each pair, cosine scores against gold.
MetricsReport eval_sts(Encoder& model, const ScoredPairSet& pairs, const StsEvalOptions& options = {});

// Spearman only; the cheap path used for validation during training.
double sts_spearman(Encoder& model, const ScoredPairSet& pairs);

}  // namespace mmcse
