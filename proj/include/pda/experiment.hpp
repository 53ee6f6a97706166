#pragma once

// End-to-end runs: data, initialisation, the epoch loop, and per-epoch
// diagnostics against the oracle.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pda/data.hpp"
#include "pda/errors.hpp"
#include "pda/nets.hpp"
#include "pda/oracle.hpp"
#include "pda/rng.hpp"
#include "pda/selection.hpp"
#include "pda/theory.hpp"
#include "pda/trainer.hpp"

namespace pda {

struct MetricsRecord {
  long epoch = 0;
  std::optional<double> target_accuracy;  // needs oracle labels
  double source_accuracy = 0.0;
  std::vector<double> w;
  LossBreakdown loss;
  std::optional<BoundReport> bound;  // needs oracle labels
  // max over target prediction rows and w of |sum - 1|
  double simplex_deviation = 0.0;
  std::optional<double> wall_seconds;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct MetricsTrace {
  std::vector<MetricsRecord> records;
  std::optional<EvalResult> final_eval;  // target, when oracle labels exist
  ModelBundle model;
};

// Everything a run needs, already resolved.
struct ExperimentSetup {
  Dataset source;
  Dataset target;  // labels stripped before training
  std::optional<oracle::OracleContext> oracle;
  std::vector<std::size_t> feature_widths{16, 16};
  std::vector<std::size_t> classifier_hidden{};
  std::vector<std::size_t> discriminator_trunk{};
  std::size_t num_classes = 5;
  VariantFlags flags = VariantFlags::san_pp();
  Schedule schedule;
  std::uint64_t seed = 0;
  bool record_wall_clock = false;
};

inline ArchitectureSpec architecture_for(const ExperimentSetup& s) {
  ArchitectureSpec a;
  a.input_dim = s.source.dim;
  a.feature_widths = s.feature_widths;
  a.classifier_hidden = s.classifier_hidden;
  a.discriminator_trunk = s.discriminator_trunk;
  a.num_classes = s.num_classes;
  a.discriminator_heads = s.flags.discriminator_heads(s.num_classes);
  a.shared_trunk = s.flags.shared_trunk || !s.flags.adversary;
  return a;
}

namespace detail {

inline double simplex_deviation(const Matrix& preds, const ClassWeights& w) {
  double dev = std::abs(w.total() - 1.0);
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    double s = 0.0;
    for (double v : preds.row(i)) s += v;
    dev = std::max(dev, std::abs(s - 1.0));
  }
  return dev;
}

}  // namespace detail

// Diagnostics for the current model. Draws only from `proxy_rng`.
inline MetricsRecord snapshot(ModelBundle& model, const ExperimentSetup& s, long epoch, const LossBreakdown& loss,
                              Rng& proxy_rng) {
  MetricsRecord rec;
  rec.epoch = epoch;
  rec.loss = loss;
  const Matrix tx = s.target.features();
  const Matrix sx = s.source.features();
  const std::vector<std::size_t> sy = s.source.labels();
  const Matrix tf = extract_features(model, tx);
  const Matrix sf = extract_features(model, sx);
  const Matrix tp = predict(model, tx);
  const Matrix sp = predict(model, sx);
  const ClassWeights w = class_transferable_probability(tp);
  rec.w.assign(w.values().begin(), w.values().end());
  rec.simplex_deviation = detail::simplex_deviation(tp, w);
  rec.source_accuracy = evaluate_predictions(sp, sy).accuracy;
  if (s.oracle) {
    rec.target_accuracy = evaluate_predictions(tp, s.oracle->target_labels).accuracy;
    rec.bound = check_bound(BoundInputs{tp, *s.oracle, sp, sy, sf, tf, epoch}, proxy_rng);
  }
  return rec;
}

using RecordSink = std::function<void(const MetricsRecord&)>;

// Record 0 describes the initial model; record e follows epoch e. Rng
// substreams: "init" for parameters, "shuffle" for batches, "proxy" for the
// divergence estimator.
inline MetricsTrace run_experiment(ExperimentSetup s, const RecordSink& sink = {}) {
  s.schedule.validate();
  s.flags.validate();
  if (s.source.empty() || s.target.empty()) throw UsageError("run_experiment: empty dataset");
  if (!s.source.fully_labeled()) throw UsageError("run_experiment: source samples must be labeled");
  if (s.source.dim != s.target.dim) throw DimensionError("run_experiment: source and target widths differ");
  for (std::size_t y : s.source.labels())
    if (y >= s.num_classes) throw DomainError("run_experiment: source label outside [0, num_classes)");
  if (s.oracle) {
    s.oracle->validate(s.num_classes);
    if (s.oracle->target_labels.size() != s.target.size())
      throw DimensionError("run_experiment: oracle labels misaligned with target");
  }
  s.target = s.target.unlabeled();

  const Rng root(s.seed);
  Rng shuffle_rng = root.substream("shuffle");
  Rng proxy_root = root.substream("proxy");
  const auto clock_start = std::chrono::steady_clock::now();
  const auto stamp = [&](MetricsRecord& r) {
    if (s.record_wall_clock)
      r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  };

  TrainState st;
  st.bundle = init_bundle(architecture_for(s), root.substream("init"));
  st.total_steps = s.schedule.total_epochs * steps_per_epoch(s.source, s.target, s.schedule.batch_size);

  MetricsTrace trace;
  {
    Rng proxy_rng = proxy_root.substream("epoch/0");
    MetricsRecord r = snapshot(st.bundle, s, 0, LossBreakdown{}, proxy_rng);
    stamp(r);
    if (sink) sink(r);
    trace.records.push_back(std::move(r));
  }
  for (std::size_t e = 0; e < s.schedule.total_epochs; ++e) {
    const EpochResult er = train_epoch(st, s.source, s.target, s.flags, s.schedule, e, shuffle_rng);
    const long epoch = static_cast<long>(e + 1);
    Rng proxy_rng = proxy_root.substream("epoch/" + std::to_string(epoch));
    MetricsRecord r = snapshot(st.bundle, s, epoch, er.mean, proxy_rng);
    stamp(r);
    if (sink) sink(r);
    trace.records.push_back(std::move(r));
  }
  if (s.oracle) trace.final_eval = evaluate(st.bundle, s.target.features(), s.oracle->target_labels);
  trace.model = std::move(st.bundle);
  return trace;
}

// Synthetic task, labels moved into the oracle.
inline ExperimentSetup toy_setup(const SyntheticSpec& spec, const VariantFlags& flags, const Schedule& sched,
                                 std::uint64_t seed) {
  ToyData d = generate_toy(spec);
  ExperimentSetup s;
  s.source = std::move(d.source);
  s.target = std::move(d.target);
  s.oracle = std::move(d.oracle);
  s.num_classes = spec.num_source_classes;
  s.flags = flags;
  s.schedule = sched;
  s.seed = seed;
  return s;
}

}  // namespace pda
