#include "mmcse/losses.hpp"

#include <cmath>
#include <string>

#include "mmcse/error.hpp"

namespace mmcse {

namespace {

void require_aligned(const Representation& a, const Representation& b, const char* what) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.rows() != b.rows() || a.dim() != b.dim()) {
    throw AlignmentError(std::string(what) + ": batches " + shape_string(a.value().shape()) + " and " +
                         shape_string(b.value().shape()) + " are not aligned");
  }
  if (a.rows() == 0) throw AlignmentError(std::string(what) + ": empty batch");
}

void require_tau(double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be positive");
}

LossValue reduce(const ag::Var& per_anchor, Reduction reduction) {
  auto total = ag::sum(per_anchor);
  if (reduction == Reduction::Mean) total = ag::scale(total, 1.0 / static_cast<double>(per_anchor.value().size()));
  const auto& v = per_anchor.value().storage();
  return {total, std::vector<double>(v.begin(), v.end())};
}

std::vector<unsigned char> diagonal_mask(std::size_t n, std::size_t cols) {
  std::vector<unsigned char> m(n * cols, 0);
  for (std::size_t i = 0; i < n; ++i) m[i * cols + i] = 1;
  return m;
}

LossValue simclr_form(const Representation& a, const Representation& b, double tau, Reduction reduction,
                      const char* what) {
  require_aligned(a, b, what);
  require_tau(tau);
  const std::size_t n = a.rows();
  auto logits = ag::scale(cosine_matrix(a.vectors, b.vectors), 1.0 / tau);
  auto per = ag::contrastive_log_ratio(logits, diagonal_mask(n, n), std::vector<unsigned char>(n * n, 1));
  return reduce(per, reduction);
}

}  // namespace

std::string_view modal_loss_name(ModalLossVariant v) {
  return v == ModalLossVariant::SupCon ? "supcon" : "simclr";
}

void LossConfig::validate() const {
  if (!(tau_text > 0.0) || !(tau_modal > 0.0)) throw InvalidArgument("temperatures must be positive");
  if (!(omega_modal >= 0.0)) throw InvalidArgument("omega_modal must be nonnegative");
}

ag::Var cosine_matrix(const ag::Var& a, const ag::Var& b) {
  return ag::matmul_nt(ag::l2_normalize_rows(a), ag::l2_normalize_rows(b));
}

LossValue text_unsup_loss(const Representation& views_a, const Representation& views_b, double tau,
                          Reduction reduction) {
  return simclr_form(views_a, views_b, tau, reduction, "text_unsup_loss");
}

LossValue text_sup_loss(const Representation& anchors, const Representation& positives,
                        const Representation& negatives, double tau, Reduction reduction) {
  require_aligned(anchors, positives, "text_sup_loss");
  require_aligned(anchors, negatives, "text_sup_loss");
  require_tau(tau);
  const std::size_t n = anchors.rows();
  auto candidates = ag::concat_rows(positives.vectors, negatives.vectors);
  auto logits = ag::scale(cosine_matrix(anchors.vectors, candidates), 1.0 / tau);
  auto per = ag::contrastive_log_ratio(logits, diagonal_mask(n, 2 * n), std::vector<unsigned char>(n * 2 * n, 1));
  return reduce(per, reduction);
}

LossValue modal_supcon_loss(const Representation& views_a, const Representation& views_b, std::span<const int> labels,
                            double tau, Reduction reduction) {
  require_aligned(views_a, views_b, "modal_supcon_loss");
  require_tau(tau);
  const std::size_t n = views_a.rows();
  if (labels.size() != n) {
    throw AlignmentError("modal_supcon_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " examples");
  }
  std::vector<unsigned char> num(n * n, 0), den(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    bool has_negative = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (labels[i] == labels[j]) {
        num[i * n + j] = 1;
      } else {
        den[i * n + j] = 1;
        has_negative = true;
      }
    }
    if (!has_negative) {
      throw EmptyDenominatorError("modal_supcon_loss: anchor " + std::to_string(i) + " (label " +
                                  std::to_string(labels[i]) + ") has no different-class view in a batch of " +
                                  std::to_string(n));
    }
  }
  auto logits = ag::scale(cosine_matrix(views_a.vectors, views_b.vectors), 1.0 / tau);
  auto per = ag::contrastive_log_ratio(logits, std::move(num), std::move(den));
  return reduce(per, reduction);
}

LossValue modal_simclr_loss(const Representation& views_a, const Representation& views_b, double tau,
                            Reduction reduction) {
  return simclr_form(views_a, views_b, tau, reduction, "modal_simclr_loss");
}

ag::Var combine(const ag::Var& loss_text, const ag::Var& loss_modal, double omega) {
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw InvalidArgument("omega must be finite and nonnegative");
  return ag::add(loss_text, ag::scale(loss_modal, omega));
}

}  // namespace mmcse
