#include "mmcse_reference/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace mmcse::reference {

namespace {

double dot(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) s += a.at(i, c) * b.at(j, c);
  return s;
}

std::vector<double> unit(const Tensor& x, std::size_t i) {
  const double n = std::sqrt(dot(x, i, x, i));
  std::vector<double> u(x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) u[c] = x.at(i, c) / n;
  return u;
}

double sq_dist(const std::vector<double>& u, const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t c = 0; c < u.size(); ++c) s += (u[c] - v[c]) * (u[c] - v[c]);
  return s;
}

std::vector<double> ranks(const std::vector<double>& v) {
  // rank_i = 1 + #{j : v_j < v_i} + (#{j : v_j == v_i} - 1) / 2
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) less += 1.0;
      if (v[j] == v[i]) equal += 1.0;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

}  // namespace

double cosine(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  return dot(a, i, b, j) / (std::sqrt(dot(a, i, a, i)) * std::sqrt(dot(b, j, b, j)));
}

std::vector<double> text_unsup(const Tensor& a, const Tensor& b, double tau) {
  const std::size_t n = a.rows();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double den = 0.0;
    for (std::size_t j = 0; j < n; ++j) den += std::exp(cosine(a, i, b, j) / tau);
    out[i] = -std::log(std::exp(cosine(a, i, b, i) / tau) / den);
  }
  return out;
}

std::vector<double> text_sup(const Tensor& anchors, const Tensor& positives, const Tensor& negatives, double tau) {
  const std::size_t n = anchors.rows();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      den += std::exp(cosine(anchors, i, positives, j) / tau) + std::exp(cosine(anchors, i, negatives, j) / tau);
    }
    out[i] = -std::log(std::exp(cosine(anchors, i, positives, i) / tau) / den);
  }
  return out;
}

std::vector<double> modal_supcon(const Tensor& a, const Tensor& b, const std::vector<int>& labels, double tau) {
  const std::size_t n = a.rows();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double num = std::exp(cosine(a, i, b, i) / tau);
    double den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double e = std::exp(cosine(a, i, b, j) / tau);
      if (labels[j] == labels[i]) {
        num += e;
      } else {
        den += e;
      }
    }
    if (den == 0.0) throw std::domain_error("anchor without a different-class view");
    out[i] = -std::log(num / den);
  }
  return out;
}

std::vector<double> modal_simclr(const Tensor& a, const Tensor& b, double tau) { return text_unsup(a, b, tau); }

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

double alignment(const Tensor& a, const Tensor& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) total += sq_dist(unit(a, i), unit(b, i));
  return total / static_cast<double>(a.rows());
}

double uniformity_raw(const Tensor& x) {
  double total = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.rows(); ++j) {
      if (j <= i) continue;
      total += std::exp(-2.0 * sq_dist(unit(x, i), unit(x, j)));
      pairs += 1.0;
    }
  }
  return total / pairs;
}

std::vector<std::size_t> topk(const std::vector<double>& query, const Tensor& corpus, std::size_t k) {
  Tensor q({1, query.size()}, query);
  const std::size_t n = corpus.rows();
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) score[i] = cosine(q, 0, corpus, i);
  // Selection by repeated scans: each pick is the highest remaining score,
  // lowest index on ties.
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < k; ++r) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || score[i] > score[best]) best = i;
    }
    taken[best] = true;
    out.push_back(best);
  }
  return out;
}

}  // namespace mmcse::reference
