#pragma once

// Class- and instance-level transferable probabilities and the entropy-aware
// example weight.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "pda/errors.hpp"
#include "pda/tensor.hpp"

namespace pda {

// A point on the |C_s|-simplex: the class transferable probability.
class ClassWeights {
 public:
  ClassWeights() = default;
  explicit ClassWeights(std::vector<double> w) : w_(std::move(w)) {}

  static ClassWeights uniform(std::size_t k) {
    return ClassWeights(std::vector<double>(k, 1.0 / static_cast<double>(k)));
  }

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t k) const { return w_[k]; }
  std::span<const double> values() const { return w_; }
  double total() const { return std::accumulate(w_.begin(), w_.end(), 0.0); }

  friend bool operator==(const ClassWeights&, const ClassWeights&) = default;

 private:
  std::vector<double> w_;
};

// Shannon entropy with natural log; 0 log 0 = 0.
inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

// Column means of the target predictions.
inline ClassWeights class_transferable_probability(const Matrix& target_preds) {
  if (target_preds.rows() == 0) throw UsageError("class_transferable_probability: empty target set");
  std::vector<double> w(target_preds.cols(), 0.0);
  for (std::size_t i = 0; i < target_preds.rows(); ++i)
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += target_preds(i, k);
  const double n = static_cast<double>(target_preds.rows());
  for (double& v : w) v /= n;
  return ClassWeights(std::move(w));
}

// 1 + exp(-H(pred)), in (1, 2].
inline double entropy_weight(std::span<const double> pred) { return 1.0 + std::exp(-entropy(pred)); }

// A prediction row read as per-head alignment weights.
inline std::vector<double> instance_weights(std::span<const double> pred) {
  return {pred.begin(), pred.end()};
}

}  // namespace pda
