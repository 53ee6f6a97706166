#pragma once

// Training objectives: selective supervised loss, class-selective
// self-training, the weighted multi-head adversarial loss, and their sum.
//
// Each loss is built from tape primitives so it differentiates like any other
// expression. Weighting factors (class weights, instance weights, entropy
// weights, pseudo-labels) are constants on the tape: no gradient flows
// through them.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pda/errors.hpp"
#include "pda/selection.hpp"
#include "pda/tensor.hpp"

namespace pda {

struct LossBreakdown {
  double l_sup = 0.0;
  double l_self = 0.0;
  double l_adv = 0.0;
  double objective = 0.0;  // l_sup + l_self - l_adv
  // Entropy-minimisation regulariser, nonzero only for the entropy ablation.
  double l_ent = 0.0;

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

inline LossBreakdown make_breakdown(double l_sup, double l_self, double l_adv, double l_ent = 0.0) {
  return LossBreakdown{l_sup, l_self, l_adv, l_sup + l_self - l_adv, l_ent};
}

namespace detail {

inline void check_labels(std::span<const std::size_t> labels, std::size_t k, const char* op) {
  for (std::size_t y : labels)
    if (y >= k) throw DomainError(std::string(op) + ": label " + std::to_string(y) + " out of range");
}

// mean_i coeff_i * (-log pred[i, label_i])
inline Var weighted_hard_ce(Var preds, std::span<const std::size_t> labels, std::span<const double> class_w,
                            const char* op) {
  const std::size_t m = preds.rows(), k = preds.cols();
  if (m == 0) throw UsageError(std::string(op) + ": empty batch");
  if (labels.size() != m) throw DimensionError(std::string(op) + ": labels misaligned with predictions");
  if (class_w.size() != k) throw DimensionError(std::string(op) + ": class weight length mismatch");
  check_labels(labels, k, op);
  Matrix coeff(m, k);
  for (std::size_t i = 0; i < m; ++i) coeff(i, labels[i]) = -class_w[labels[i]] / static_cast<double>(m);
  Tape& t = preds.tape();
  return sum(mul(log(preds, kLogFloor), t.input(std::move(coeff))));
}

}  // namespace detail

// mean over the batch of w_y * CE(pred, y).
inline Var supervised_loss(Var preds, std::span<const std::size_t> labels, std::span<const double> class_w) {
  return detail::weighted_hard_ce(preds, labels, class_w, "supervised_loss");
}

struct PseudoLabels {
  std::vector<std::size_t> hard;  // argmax, lowest index on ties
  Matrix soft;                    // the prediction rows themselves
};

inline PseudoLabels assign_pseudo_labels(const Matrix& preds) {
  PseudoLabels p{{}, preds};
  p.hard.reserve(preds.rows());
  for (std::size_t i = 0; i < preds.rows(); ++i) p.hard.push_back(argmax(preds.row(i)));
  return p;
}

// mean over the batch of w_{pseudo} * CE(pred, pseudo); exactly 0 when disabled.
inline Var self_training_loss(Var preds, std::span<const std::size_t> pseudo, std::span<const double> class_w,
                              bool enabled) {
  if (!enabled) return preds.tape().input(Matrix::scalar(0.0));
  return detail::weighted_hard_ce(preds, pseudo, class_w, "self_training_loss");
}

struct AdversarialGates {
  bool class_sel = true;
  bool entropy_weight = true;
};

// Sum over heads k of the batch mean of
//   [w_k] * [w_e(x)] * y_hat^k * BCE(D^k(f), d).
// `domain_probs` is m x H. With H == K each head k is weighted by column k of
// `class_preds`; with H == 1 the single head sees every sample at weight 1
// and class weights do not apply. `domains` holds 1 for source, 0 for target.
inline Var adversarial_loss(Var domain_probs, const Matrix& class_preds, std::span<const int> domains,
                            std::span<const double> class_w, AdversarialGates gates) {
  const std::size_t m = domain_probs.rows(), heads = domain_probs.cols();
  if (m == 0) throw UsageError("adversarial_loss: empty batch");
  if (class_preds.rows() != m || domains.size() != m)
    throw DimensionError("adversarial_loss: misaligned batch");
  const std::size_t k = class_preds.cols();
  const bool collapsed = heads == 1 && k != 1;
  if (!collapsed && heads != k) throw DimensionError("adversarial_loss: head count must be 1 or |C_s|");
  if (class_w.size() != k) throw DimensionError("adversarial_loss: class weight length mismatch");

  // pos(i, h) multiplies log D, neg(i, h) multiplies log(1 - D).
  Matrix pos(m, heads), neg(m, heads);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (domains[i] != 0 && domains[i] != 1) throw DomainError("adversarial_loss: domain label must be 0 or 1");
    const double we = gates.entropy_weight ? entropy_weight(class_preds.row(i)) : 1.0;
    for (std::size_t h = 0; h < heads; ++h) {
      double c = we * inv_m;
      if (!collapsed) {
        c *= class_preds(i, h);
        if (gates.class_sel) c *= class_w[h];
      }
      (domains[i] == 1 ? pos : neg)(i, h) = -c;
    }
  }
  Tape& t = domain_probs.tape();
  Var log_p = log(domain_probs, kLogFloor);
  Var log_q = log(affine(domain_probs, -1.0, 1.0), kLogFloor);
  return add(sum(mul(log_p, t.input(std::move(pos)))), sum(mul(log_q, t.input(std::move(neg)))));
}

// Mean Shannon entropy of the prediction rows.
inline Var entropy_loss(Var preds) {
  if (preds.rows() == 0) throw UsageError("entropy_loss: empty batch");
  return scale(sum(mul(preds, log(preds, kLogFloor))), -1.0 / static_cast<double>(preds.rows()));
}

// Value reported for the min-max objective.
inline LossBreakdown objective(double l_sup, double l_self, double l_adv, double l_ent = 0.0) {
  return make_breakdown(l_sup, l_self, l_adv, l_ent);
}

// The scalar actually descended. The adversarial term enters with a plus
// sign: the discriminator's input went through grad_reverse, so one descent
// step lowers L_adv in theta_D while the reversed gradient raises it in
// theta_F.
inline Var training_loss(Var l_sup, Var l_self, Var l_adv_reversed) { return add(add(l_sup, l_self), l_adv_reversed); }

}  // namespace pda
