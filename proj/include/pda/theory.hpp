#pragma once

// Auditing the L1 estimation error of the class transferable probability.
//
// For target predictions y_hat with argmax phi and one-hot truth y_dot:
//
//   ||w_dot - w||_1 <= 2 delta_bar + 2 E_I(h) + 2 E_q(h_C)                (a)
//                   <= 2 delta_bar + 2 E_I(h) + 2 E_p_C(h_C) + 2 d(p_C, q)  (b)
//
// Every step up to (a) is pointwise, so (a) holds exactly over the empirical
// target set and is asserted. (b) needs the supremum divergence, which is
// only estimated here, so it is reported and never asserted.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pda/errors.hpp"
#include "pda/oracle.hpp"
#include "pda/rng.hpp"
#include "pda/selection.hpp"
#include "pda/tensor.hpp"

namespace pda {

// Slack on the asserted inequality, covering accumulated rounding.
inline constexpr double kBoundTolerance = 1e-9;

struct BoundReport {
  double delta_bar = 0.0;
  double e_type1 = 0.0;
  double e_src_shared = 0.0;
  double e_tgt_shared = 0.0;
  double d_hdh_proxy = 0.0;
  double w_error_l1 = 0.0;
  double rhs_intermediate = 0.0;
  double rhs_full = 0.0;
  long epoch = 0;

  friend bool operator==(const BoundReport&, const BoundReport&) = default;
};

// Mean of 1 - max_k y_hat_k.
inline double delta_bar(const Matrix& preds) {
  if (preds.rows() == 0) throw UsageError("delta_bar: empty prediction set");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    const auto r = preds.row(i);
    s += 1.0 - *std::max_element(r.begin(), r.end());
  }
  return s / static_cast<double>(preds.rows());
}

// Fraction of rows whose argmax falls outside C.
inline double type1_error(const Matrix& preds, const std::vector<std::size_t>& shared) {
  if (preds.rows() == 0) return 0.0;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < preds.rows(); ++i)
    if (!std::binary_search(shared.begin(), shared.end(), argmax(preds.row(i)))) ++bad;
  return static_cast<double>(bad) / static_cast<double>(preds.rows());
}

// Argmax over the entries indexed by C; ties go to the lowest index.
inline std::size_t restricted_argmax(std::span<const double> pred, const std::vector<std::size_t>& shared) {
  if (shared.empty()) throw UsageError("restricted_argmax: empty class set");
  std::size_t best = shared.front();
  for (std::size_t k : shared) {
    if (k >= pred.size()) throw DomainError("restricted_argmax: class index out of range");
    if (pred[k] > pred[best] || (pred[k] == pred[best] && k < best)) best = k;
  }
  return best;
}

// Error rate of the classifier confined to C, on samples whose labels are in C.
inline double shared_error(const Matrix& preds, std::span<const std::size_t> labels,
                           const std::vector<std::size_t>& shared) {
  if (labels.size() != preds.rows()) throw DimensionError("shared_error: labels misaligned with predictions");
  if (labels.empty()) throw UsageError("shared_error: empty sample set");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::binary_search(shared.begin(), shared.end(), labels[i]))
      throw DomainError("shared_error: label " + std::to_string(labels[i]) + " outside C");
    if (restricted_argmax(preds.row(i), shared) != labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

struct ProxyBudget {
  std::size_t steps = 200;
  double learning_rate = 0.1;
  double train_fraction = 0.8;
};

// Proxy divergence 2 (1 - 2 err), floored at 0. `err` is the balanced
// held-out error of a logistic domain classifier trained by full-batch
// gradient descent on standardised frozen features (source = 1, target = 0).
// Each domain is split train/held-out independently.
inline double estimate_hdh_divergence(const Matrix& source, const Matrix& target, Rng& rng,
                                      ProxyBudget budget = {}) {
  if (source.cols() != target.cols()) throw DimensionError("estimate_hdh_divergence: feature widths differ");
  const std::size_t d = source.cols();
  const auto split = [&](const Matrix& m, std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
    const auto perm = rng.permutation(m.rows());
    const auto n_train = static_cast<std::size_t>(std::floor(budget.train_fraction * static_cast<double>(m.rows())));
    train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    if (train.empty() || test.empty()) throw UsageError("estimate_hdh_divergence: degenerate split sizes");
  };
  std::vector<std::size_t> s_train, s_test, t_train, t_test;
  split(source, s_train, s_test);
  split(target, t_train, t_test);

  // Standardise with training-split statistics.
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  const double n_train = static_cast<double>(s_train.size() + t_train.size());
  for (std::size_t i : s_train)
    for (std::size_t j = 0; j < d; ++j) mu[j] += source(i, j);
  for (std::size_t i : t_train)
    for (std::size_t j = 0; j < d; ++j) mu[j] += target(i, j);
  for (double& v : mu) v /= n_train;
  for (std::size_t i : s_train)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (source(i, j) - mu[j]) * (source(i, j) - mu[j]);
  for (std::size_t i : t_train)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (target(i, j) - mu[j]) * (target(i, j) - mu[j]);
  for (double& v : sd) {
    v = std::sqrt(v / n_train);
    if (v < 1e-12) v = 1.0;
  }

  std::vector<double> w(d, 0.0);
  double b = 0.0;
  const auto logit = [&](const Matrix& m, std::size_t i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * (m(i, j) - mu[j]) / sd[j];
    return z;
  };
  const auto sigm = [](double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); };
  // Each domain contributes half of the training objective.
  const double ws = 0.5 / static_cast<double>(s_train.size());
  const double wt = 0.5 / static_cast<double>(t_train.size());
  std::vector<double> gw(d);
  for (std::size_t step = 0; step < budget.steps; ++step) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i : s_train) {
      const double r = (sigm(logit(source, i)) - 1.0) * ws;
      gb += r;
      for (std::size_t j = 0; j < d; ++j) gw[j] += r * (source(i, j) - mu[j]) / sd[j];
    }
    for (std::size_t i : t_train) {
      const double r = sigm(logit(target, i)) * wt;
      gb += r;
      for (std::size_t j = 0; j < d; ++j) gw[j] += r * (target(i, j) - mu[j]) / sd[j];
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= budget.learning_rate * gw[j];
    b -= budget.learning_rate * gb;
  }

  std::size_t s_wrong = 0, t_wrong = 0;
  for (std::size_t i : s_test)
    if (logit(source, i) < 0.0) ++s_wrong;
  for (std::size_t i : t_test)
    if (logit(target, i) >= 0.0) ++t_wrong;
  const double err = 0.5 * (static_cast<double>(s_wrong) / static_cast<double>(s_test.size()) +
                            static_cast<double>(t_wrong) / static_cast<double>(t_test.size()));
  return std::max(0.0, 2.0 * (1.0 - 2.0 * err));
}

struct BoundInputs {
  const Matrix& target_preds;
  const oracle::OracleContext& oracle;
  const Matrix& source_preds;
  std::span<const std::size_t> source_labels;
  const Matrix& source_features;
  const Matrix& target_features;
  long epoch = 0;
};

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("l1_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

// Fills every term and asserts w_error_l1 <= rhs_intermediate.
inline BoundReport check_bound(const BoundInputs& in, Rng& rng, ProxyBudget budget = {}) {
  const std::size_t k = in.target_preds.cols();
  const auto& shared = in.oracle.shared_classes;
  in.oracle.validate(k);
  if (in.target_preds.rows() != in.oracle.target_labels.size())
    throw DimensionError("check_bound: target predictions misaligned with oracle labels");
  if (in.source_preds.rows() != in.source_labels.size() || in.source_features.rows() != in.source_labels.size())
    throw DimensionError("check_bound: source inputs misaligned");
  if (in.target_features.rows() != in.target_preds.rows())
    throw DimensionError("check_bound: target features misaligned");

  BoundReport r;
  r.epoch = in.epoch;
  const ClassWeights w = class_transferable_probability(in.target_preds);
  const ClassWeights w_true = oracle::true_class_weights(in.oracle.target_labels, k);
  r.w_error_l1 = l1_distance(w_true.values(), w.values());
  r.delta_bar = delta_bar(in.target_preds);
  r.e_type1 = type1_error(in.target_preds, shared);
  r.e_tgt_shared = shared_error(in.target_preds, in.oracle.target_labels, shared);

  // Source restricted to the shared classes.
  std::vector<std::size_t> src_rows;
  for (std::size_t i = 0; i < in.source_labels.size(); ++i)
    if (in.oracle.in_shared(in.source_labels[i])) src_rows.push_back(i);
  if (src_rows.empty()) throw UsageError("check_bound: no source samples in the shared classes");
  Matrix sp(src_rows.size(), k), sf(src_rows.size(), in.source_features.cols());
  std::vector<std::size_t> sl;
  for (std::size_t r_i = 0; r_i < src_rows.size(); ++r_i) {
    const std::size_t i = src_rows[r_i];
    std::copy(in.source_preds.row(i).begin(), in.source_preds.row(i).end(), sp.row(r_i).begin());
    std::copy(in.source_features.row(i).begin(), in.source_features.row(i).end(), sf.row(r_i).begin());
    sl.push_back(in.source_labels[i]);
  }
  r.e_src_shared = shared_error(sp, sl, shared);
  r.d_hdh_proxy = estimate_hdh_divergence(sf, in.target_features, rng, budget);

  r.rhs_intermediate = 2.0 * r.delta_bar + 2.0 * r.e_type1 + 2.0 * r.e_tgt_shared;
  r.rhs_full = 2.0 * r.delta_bar + 2.0 * r.e_type1 + 2.0 * r.e_src_shared + 2.0 * r.d_hdh_proxy;
  if (r.w_error_l1 > r.rhs_intermediate + kBoundTolerance) {
    throw BoundViolation("check_bound: w_error_l1 " + std::to_string(r.w_error_l1) + " exceeds " +
                         std::to_string(r.rhs_intermediate) + " at epoch " + std::to_string(r.epoch));
  }
  return r;
}

// The asserted half of check_bound alone, without features or source data.
inline bool intermediate_inequality_holds(const Matrix& target_preds, const oracle::OracleContext& oracle,
                                          double* lhs = nullptr, double* rhs = nullptr) {
  const std::size_t k = target_preds.cols();
  const ClassWeights w = class_transferable_probability(target_preds);
  const ClassWeights w_true = oracle::true_class_weights(oracle.target_labels, k);
  const double l = l1_distance(w_true.values(), w.values());
  const double r = 2.0 * delta_bar(target_preds) + 2.0 * type1_error(target_preds, oracle.shared_classes) +
                   2.0 * shared_error(target_preds, oracle.target_labels, oracle.shared_classes);
  if (lhs) *lhs = l;
  if (rhs) *rhs = r;
  return l <= r + kBoundTolerance;
}

}  // namespace pda
