#pragma once

// The six component combinations of the ablation table, each run over k
// seeds. Runs are independent and may execute on worker threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "pda/experiment.hpp"
#include "pda/trainer.hpp"

namespace pda {

struct AblationVariant {
  std::string name;
  VariantFlags flags;
};

// instance / class / self-training / entropy / shared, top to bottom.
inline std::vector<AblationVariant> ablation_variants() {
  return {
      {"source_only", VariantFlags::source_only()},
      {"instance", {true, true, false, false, false, true}},
      {"instance+class", {true, true, true, false, false, true}},
      {"instance+class+entropy", {true, true, true, false, true, true}},
      {"instance+class+self_training(unshared)", {true, true, true, true, false, false}},
      {"san_pp", VariantFlags::san_pp()},
  };
}

struct AblationRow {
  AblationVariant variant;
  std::vector<double> accuracies;  // one per seed, in seed order
  double mean = 0.0;
  double stddev = 0.0;  // population
};

inline void summarize(AblationRow& row) {
  const double n = static_cast<double>(row.accuracies.size());
  double s = 0.0;
  for (double a : row.accuracies) s += a;
  row.mean = s / n;
  double v = 0.0;
  for (double a : row.accuracies) v += (a - row.mean) * (a - row.mean);
  row.stddev = std::sqrt(v / n);
}

// Seeds base.seed, base.seed + 1, ..., base.seed + k - 1. Results do not
// depend on `workers`.
inline std::vector<AblationRow> run_ablation(const ExperimentSetup& base, std::size_t k, std::size_t workers = 1,
                                             const std::vector<AblationVariant>& variants = ablation_variants()) {
  if (k == 0) throw UsageError("ablation: need at least one seed");
  if (!base.oracle) throw UsageError("ablation: target labels are required to score accuracy");
  std::vector<AblationRow> rows;
  for (const auto& v : variants) rows.push_back(AblationRow{v, std::vector<double>(k, 0.0)});

  const std::size_t jobs = rows.size() * k;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  const auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      const std::size_t r = job / k, i = job % k;
      try {
        ExperimentSetup s = base;
        s.flags = rows[r].variant.flags;
        s.seed = base.seed + i;
        rows[r].accuracies[i] = run_experiment(std::move(s)).final_eval->accuracy;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, jobs));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  for (auto& row : rows) summarize(row);
  return rows;
}

}  // namespace pda
