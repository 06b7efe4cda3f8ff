#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "mmcse/autograd.hpp"
#include "mmcse/encoder.hpp"

namespace mmcse {

enum class ModalLossVariant { SupCon, SimCLR };
enum class Reduction { Sum, Mean };

std::string_view modal_loss_name(ModalLossVariant v);

struct LossConfig {
  double tau_text = 0.05;
  double tau_modal = 0.07;
  ModalLossVariant modal_variant = ModalLossVariant::SupCon;
  double omega_modal = 1.0;
  Reduction reduction = Reduction::Sum;

  void validate() const;
};

// A reduced loss plus the per-anchor terms it was reduced from.
struct LossValue {
  ag::Var total;
  std::vector<double> per_anchor;

  double value() const { return total.value().item(); }
};

// Dropout-view InfoNCE: sum_i -log( e^{s(h_i,h'_i)/tau} / sum_j e^{s(h_i,h'_j)/tau} )
// with s the cosine similarity.
LossValue text_unsup_loss(const Representation& views_a, const Representation& views_b, double tau,
                          Reduction reduction = Reduction::Sum);

// NLI triplet loss with hard negatives:
// sum_i -log( e^{s(h_i,h+_i)/tau} / sum_j (e^{s(h_i,h+_j)/tau} + e^{s(h_i,h-_j)/tau}) )
LossValue text_sup_loss(const Representation& anchors, const Representation& positives,
                        const Representation& negatives, double tau, Reduction reduction = Reduction::Sum);

// Label-aware variant: the numerator holds the paired view plus every other
// same-class view; the denominator holds only different-class views. Throws
// EmptyDenominatorError when some anchor has no different-class view.
LossValue modal_supcon_loss(const Representation& views_a, const Representation& views_b, std::span<const int> labels,
                            double tau, Reduction reduction = Reduction::Sum);

// Same form as text_unsup_loss, applied to two augmented modal views.
LossValue modal_simclr_loss(const Representation& views_a, const Representation& views_b, double tau,
                            Reduction reduction = Reduction::Sum);

// loss_text + omega * loss_modal
ag::Var combine(const ag::Var& loss_text, const ag::Var& loss_modal, double omega);

// Cosine similarity matrix of two row sets, recorded for gradients.
ag::Var cosine_matrix(const ag::Var& a, const ag::Var& b);

}  // namespace mmcse
