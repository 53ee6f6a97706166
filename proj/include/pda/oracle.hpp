#pragma once

// Target ground truth. Nothing on the training path includes this header;
// only diagnostics (bound auditing, accuracy reporting) consume it.

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "pda/errors.hpp"
#include "pda/selection.hpp"

namespace pda::oracle {

struct OracleContext {
  std::vector<std::size_t> shared_classes;  // C, sorted and unique
  std::vector<std::size_t> target_labels;

  bool in_shared(std::size_t k) const {
    return std::binary_search(shared_classes.begin(), shared_classes.end(), k);
  }

  void validate(std::size_t num_source_classes) const {
    if (shared_classes.empty()) throw UsageError("oracle: shared class set is empty");
    if (!std::is_sorted(shared_classes.begin(), shared_classes.end()) ||
        std::adjacent_find(shared_classes.begin(), shared_classes.end()) != shared_classes.end())
      throw UsageError("oracle: shared class set must be sorted and unique");
    if (shared_classes.back() >= num_source_classes)
      throw DomainError("oracle: shared class outside the source label space");
    for (std::size_t y : target_labels)
      if (!in_shared(y)) throw DomainError("oracle: target label " + std::to_string(y) + " outside C");
  }
};

// Empirical one-hot mean of the target labels.
inline ClassWeights true_class_weights(const std::vector<std::size_t>& target_labels, std::size_t num_classes) {
  if (target_labels.empty()) throw UsageError("true_class_weights: empty label set");
  std::vector<double> w(num_classes, 0.0);
  for (std::size_t y : target_labels) {
    if (y >= num_classes) throw DomainError("true_class_weights: label " + std::to_string(y) + " out of range");
    w[y] += 1.0;
  }
  for (double& v : w) v /= static_cast<double>(target_labels.size());
  return ClassWeights(std::move(w));
}

}  // namespace pda::oracle
