#include "mmcse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mmcse/error.hpp"
#include "mmcse/kernels.hpp"

namespace mmcse {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Tensor normalized_rows(const Tensor& x) {
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double n = norm(row);
    if (n == 0.0) throw DegenerateInputError("zero-norm representation at row " + std::to_string(r));
    for (auto& v : row) v /= n;
  }
  return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<double> fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size()) {
    throw AlignmentError("spearman inputs differ in length: " + std::to_string(pred.size()) + " vs " +
                         std::to_string(gold.size()));
  }
  if (pred.size() < 2) throw InvalidArgument("spearman needs at least two points");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(pred[i]) || !std::isfinite(gold[i])) throw InvalidArgument("spearman inputs must be finite");
  }
  const auto rp = fractional_ranks(pred);
  const auto rg = fractional_ranks(gold);
  const double n = static_cast<double>(rp.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    const double dx = rp[i] - mean, dy = rg[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("spearman is undefined for a constant input");
  return sxy / std::sqrt(sxx * syy);
}

double alignment(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape() != b.shape()) {
    throw AlignmentError("alignment needs two matrices of equal shape, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  if (a.rows() == 0) throw InvalidArgument("alignment of an empty pair set");
  const Tensor na = normalized_rows(a), nb = normalized_rows(b);
  double total = 0.0;
  for (std::size_t r = 0; r < na.rows(); ++r) total += squared_distance(na.row(r), nb.row(r));
  return total / static_cast<double>(na.rows());
}

Uniformity uniformity(const Tensor& reps) {
  if (reps.rank() != 2) throw DimensionError("uniformity expects a matrix");
  const std::size_t n = reps.rows();
  if (n < 2) throw InvalidArgument("uniformity needs at least two representations");
  const Tensor x = normalized_rows(reps);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) total += std::exp(-2.0 * squared_distance(x.row(i), x.row(j)));
  }
  Uniformity u;
  u.raw = total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
  u.log = std::log(u.raw);
  return u;
}

std::vector<RetrievalHit> retrieve_topk(std::span<const double> query, const Tensor& corpus, std::size_t k) {
  if (corpus.rank() != 2 || corpus.cols() != query.size()) {
    throw AlignmentError("query width " + std::to_string(query.size()) + " does not match corpus " +
                         shape_string(corpus.shape()));
  }
  const std::size_t n = corpus.rows();
  if (k > n) throw InvalidArgument("k=" + std::to_string(k) + " exceeds corpus size " + std::to_string(n));
  std::vector<RetrievalHit> hits(n);
  for (std::size_t i = 0; i < n; ++i) hits[i] = {i, cosine_similarity(query, corpus.row(i))};
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  hits.resize(k);
  return hits;
}

MetricStat mean_std(std::span<const double> values) {
  if (values.size() < 2) throw InvalidArgument("aggregation needs at least two values");
  // Welford updates: identical inputs give exactly that mean and zero spread.
  double mean = 0.0, m2 = 0.0, k = 0.0;
  for (double v : values) {
    k += 1.0;
    const double delta = v - mean;
    mean += delta / k;
    m2 += delta * (v - mean);
  }
  return {mean, std::sqrt(m2 / (k - 1.0))};
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["spearman"] = spearman;
  j["alignment"] = alignment;
  j["uniformity_log"] = uniformity_log;
  j["uniformity_raw"] = uniformity_raw;
  if (retrieval) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : *retrieval) {
      auto hits = nlohmann::ordered_json::array();
      for (const auto& h : row.hits) hits.push_back({{"index", h.index}, {"score", h.score}});
      rows.push_back({{"query", row.query}, {"hits", hits}});
    }
    j["retrieval"] = rows;
  }
  if (aggregate) {
    nlohmann::ordered_json agg = nlohmann::ordered_json::object();
    for (const auto& [name, stat] : *aggregate) agg[name] = {{"mean", stat.mean}, {"std", stat.std}};
    j["aggregate"] = agg;
  }
  j["metadata"] = {{"seed", metadata.seed}, {"step", metadata.step}, {"config_hash", metadata.config_hash}};
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.spearman = j.at("spearman").get<double>();
    r.alignment = j.at("alignment").get<double>();
    r.uniformity_log = j.at("uniformity_log").get<double>();
    r.uniformity_raw = j.at("uniformity_raw").get<double>();
    if (j.contains("retrieval")) {
      std::vector<RetrievalRow> rows;
      for (const auto& row : j.at("retrieval")) {
        RetrievalRow rr;
        rr.query = row.at("query").get<std::size_t>();
        for (const auto& h : row.at("hits")) rr.hits.push_back({h.at("index").get<std::size_t>(), h.at("score").get<double>()});
        rows.push_back(std::move(rr));
      }
      r.retrieval = std::move(rows);
    }
    if (j.contains("aggregate")) {
      std::map<std::string, MetricStat> agg;
      for (const auto& [name, stat] : j.at("aggregate").items()) {
        agg[name] = {stat.at("mean").get<double>(), stat.at("std").get<double>()};
      }
      r.aggregate = std::move(agg);
    }
    if (j.contains("metadata")) {
      const auto& m = j.at("metadata");
      r.metadata.seed = m.at("seed").get<std::uint64_t>();
      r.metadata.step = m.at("step").get<std::uint64_t>();
      r.metadata.config_hash = m.at("config_hash").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

MetricsReport aggregate(std::span<const MetricsReport> reports) {
  if (reports.size() < 2) throw InvalidArgument("aggregate needs at least two reports");
  auto column = [&](double MetricsReport::*field) {
    std::vector<double> v;
    v.reserve(reports.size());
    for (const auto& r : reports) v.push_back(r.*field);
    return mean_std(v);
  };
  std::map<std::string, MetricStat> agg{
      {"spearman", column(&MetricsReport::spearman)},
      {"alignment", column(&MetricsReport::alignment)},
      {"uniformity_log", column(&MetricsReport::uniformity_log)},
      {"uniformity_raw", column(&MetricsReport::uniformity_raw)},
  };
  MetricsReport out;
  out.spearman = agg["spearman"].mean;
  out.alignment = agg["alignment"].mean;
  out.uniformity_log = agg["uniformity_log"].mean;
  out.uniformity_raw = agg["uniformity_raw"].mean;
  out.aggregate = std::move(agg);
  out.metadata = reports.front().metadata;
  return out;
}

namespace {

struct PairEmbeddings {
  Tensor a;
  Tensor b;
};

PairEmbeddings embed_pairs(Encoder& model, const ScoredPairSet& pairs) {
  if (pairs.empty()) throw InvalidArgument("empty scored pair set");
  std::vector<Sentence> left, right;
  left.reserve(pairs.size());
  right.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!std::isfinite(p.gold)) throw InvalidArgument("non-finite gold score");
    left.push_back(p.a);
    right.push_back(p.b);
  }
  return {embed_sentences(model, left), embed_sentences(model, right)};
}

std::vector<double> pair_scores(const PairEmbeddings& e) {
  std::vector<double> scores(e.a.rows());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = cosine_similarity(e.a.row(i), e.b.row(i));
  return scores;
}

std::vector<double> gold_scores(const ScoredPairSet& pairs) {
  std::vector<double> gold;
  gold.reserve(pairs.size());
  for (const auto& p : pairs) gold.push_back(p.gold);
  return gold;
}

}  // namespace

MetricsReport eval_sts(Encoder& model, const ScoredPairSet& pairs, const StsEvalOptions& options) {
  const PairEmbeddings e = embed_pairs(model, pairs);
  MetricsReport report;
  report.spearman = spearman(pair_scores(e), gold_scores(pairs));

  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].gold >= options.positive_threshold) positives.push_back(i);
  }
  if (positives.empty()) {
    throw InvalidArgument("no pair reaches the positive threshold " + std::to_string(options.positive_threshold));
  }
  const std::size_t h = e.a.cols();
  Tensor pa({positives.size(), h}), pb({positives.size(), h});
  for (std::size_t k = 0; k < positives.size(); ++k) {
    std::copy_n(e.a.row(positives[k]).data(), h, pa.row(k).data());
    std::copy_n(e.b.row(positives[k]).data(), h, pb.row(k).data());
  }
  report.alignment = alignment(pa, pb);

  Tensor all({2 * pairs.size(), h});
  std::copy(e.a.values().begin(), e.a.values().end(), all.values().begin());
  std::copy(e.b.values().begin(), e.b.values().end(), all.values().begin() + static_cast<std::ptrdiff_t>(e.a.size()));
  const Uniformity u = uniformity(all);
  report.uniformity_raw = u.raw;
  report.uniformity_log = u.log;
  return report;
}

double sts_spearman(Encoder& model, const ScoredPairSet& pairs) {
  return spearman(pair_scores(embed_pairs(model, pairs)), gold_scores(pairs));
}

}  // namespace mmcse
