#pragma once

// Brute-force scalar implementations used to cross-check the vectorized
// library code. Everything here is written as direct loops over the
// defining sums with no shared helpers from the core library.

#include <cstddef>
#include <vector>

#include "mmcse/tensor.hpp"

namespace mmcse::reference {

double cosine(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j);

// Per-anchor terms; the loss is their sum.
std::vector<double> text_unsup(const Tensor& a, const Tensor& b, double tau);
std::vector<double> text_sup(const Tensor& anchors, const Tensor& positives, const Tensor& negatives, double tau);
std::vector<double> modal_supcon(const Tensor& a, const Tensor& b, const std::vector<int>& labels, double tau);
std::vector<double> modal_simclr(const Tensor& a, const Tensor& b, double tau);

double spearman(const std::vector<double>& x, const std::vector<double>& y);
double alignment(const Tensor& a, const Tensor& b);
double uniformity_raw(const Tensor& x);
std::vector<std::size_t> topk(const std::vector<double>& query, const Tensor& corpus, std::size_t k);

}  // namespace mmcse::reference
