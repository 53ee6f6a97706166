#pragma once

// Optimisation schedules, SGD with momentum, and the per-epoch training loop
// for every method variant. Nothing here sees target labels.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pda/data.hpp"
#include "pda/errors.hpp"
#include "pda/losses.hpp"
#include "pda/nets.hpp"
#include "pda/rng.hpp"
#include "pda/selection.hpp"
#include "pda/tensor.hpp"

namespace pda {

// Which components of the method are active.
struct VariantFlags {
  bool adversary = true;      // any domain-adversarial term at all
  bool instance_sel = true;   // multi-head discriminator weighted by y_hat
  bool class_sel = true;      // class weights w in every loss, entropy weight in L_adv
  bool self_training = true;  // class-selective pseudo-label loss
  bool entropy_min = false;   // entropy-minimisation regulariser on target
  bool shared_trunk = true;   // discriminator heads share bottom layers

  static VariantFlags source_only() { return {false, false, false, false, false, false}; }
  static VariantFlags dann() { return {true, false, false, false, false, false}; }
  static VariantFlags san() { return {true, true, false, false, true, false}; }
  static VariantFlags san_pp() { return {true, true, true, true, false, true}; }

  static VariantFlags from_preset(std::string_view name) {
    if (name == "source_only") return source_only();
    if (name == "dann") return dann();
    if (name == "san") return san();
    if (name == "san_pp") return san_pp();
    throw ConfigError("unknown variant preset '" + std::string(name) + "'");
  }

  void validate() const {
    if (!adversary && (instance_sel || shared_trunk))
      throw ConfigError("variant: instance_sel and shared_trunk need the adversarial term");
  }

  std::size_t discriminator_heads(std::size_t num_classes) const { return instance_sel ? num_classes : 1; }

  friend bool operator==(const VariantFlags&, const VariantFlags&) = default;
};

struct Schedule {
  double eta0 = 0.05;
  double alpha = 10.0;
  double beta = 0.75;
  double momentum = 0.9;
  std::size_t total_epochs = 30;
  std::size_t warmup_epochs = 5;            // epochs before self-training starts
  std::size_t selection_warmup_epochs = 1;  // epochs with w held uniform
  std::size_t log_interval = 10;
  std::size_t batch_size = 32;
  double ramp_gamma = 10.0;    // lambda(p) = lambda_max (2 / (1 + exp(-gamma p)) - 1)
  double lambda_max = 1.0;
  double entropy_coef = 0.1;

  void validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(eta0)) throw ConfigError("schedule: eta0 must be positive");
    if (!(std::isfinite(alpha) && alpha >= 0.0)) throw ConfigError("schedule: alpha must be >= 0");
    if (!(std::isfinite(beta) && beta >= 0.0)) throw ConfigError("schedule: beta must be >= 0");
    if (!(std::isfinite(momentum) && momentum >= 0.0 && momentum < 1.0))
      throw ConfigError("schedule: momentum must be in [0, 1)");
    if (log_interval == 0) throw ConfigError("schedule: log_interval must be positive");
    if (batch_size == 0) throw ConfigError("schedule: batch_size must be positive");
    if (!positive(ramp_gamma)) throw ConfigError("schedule: ramp_gamma must be positive");
    if (!(std::isfinite(lambda_max) && lambda_max >= 0.0)) throw ConfigError("schedule: lambda_max must be >= 0");
    if (!(std::isfinite(entropy_coef) && entropy_coef >= 0.0)) throw ConfigError("schedule: entropy_coef must be >= 0");
  }

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

// eta0 / (1 + alpha p)^beta
inline double lr_at(double p, const Schedule& s) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("lr_at: progress must lie in [0, 1]");
  return s.eta0 / std::pow(1.0 + s.alpha * p, s.beta);
}

// 2 / (1 + exp(-gamma p)) - 1
inline double adv_ramp(double p, double gamma = 10.0) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("adv_ramp: progress must lie in [0, 1]");
  return 2.0 / (1.0 + std::exp(-gamma * p)) - 1.0;
}

// v <- momentum v + g; theta <- theta - lr v. Parameters without a gradient
// are treated as having a zero gradient.
inline void sgd_step(std::span<Tensor* const> params, std::vector<Matrix>& velocity, double lr, double momentum) {
  if (velocity.empty()) {
    for (Tensor* p : params) velocity.emplace_back(p->rows(), p->cols());
  }
  if (velocity.size() != params.size()) throw DimensionError("sgd_step: velocity count differs from parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Matrix& v = velocity[i];
    if (!v.same_shape(p.value())) throw DimensionError("sgd_step: velocity shape mismatch");
    const std::optional<Matrix>& g = p.grad();
    if (g && !g->same_shape(p.value())) throw DimensionError("sgd_step: gradient shape mismatch");
    auto& vv = v.values();
    auto& pv = p.value().values();
    for (std::size_t j = 0; j < vv.size(); ++j) {
      vv[j] = momentum * vv[j] + (g ? g->values()[j] : 0.0);
      pv[j] -= lr * vv[j];
    }
  }
}

struct TrainState {
  ModelBundle bundle;
  std::vector<Matrix> velocity;
  std::size_t global_step = 0;
  std::size_t total_steps = 0;
};

// One mini-batch with everything the losses need.
struct StepBatch {
  Matrix source_x;
  std::vector<std::size_t> source_y;
  Matrix target_x;
  std::vector<std::size_t> target_pseudo;  // empty when self-training is inactive
};

struct StepParams {
  double lr = 0.0;
  double lambda = 0.0;
  double momentum = 0.9;
  double entropy_coef = 0.1;
  bool self_active = false;
};

// Forward, backward and one SGD update. `class_w` must already be gated
// (all ones when class selection is off).
inline LossBreakdown train_step(TrainState& st, const StepBatch& batch, std::span<const double> class_w,
                                const VariantFlags& flags, const StepParams& sp) {
  ModelBundle& b = st.bundle;
  Tape tape;
  Var xs = tape.input(batch.source_x);
  Var xt = tape.input(batch.target_x);
  Var fs = f_forward(b.feature, tape, xs);
  Var ft = f_forward(b.feature, tape, xt);
  Var ps = g_forward(b.classifier, tape, fs);
  Var pt = g_forward(b.classifier, tape, ft);

  Var l_sup = supervised_loss(ps, batch.source_y, class_w);
  Var l_self = self_training_loss(pt, batch.target_pseudo, class_w, sp.self_active);
  Var total = add(l_sup, l_self);

  double adv_value = 0.0;
  if (flags.adversary) {
    Var f = concat_rows(fs, ft);
    Var dp = d_forward(b.discriminator, tape, f, sp.lambda);
    Matrix class_preds(ps.rows() + pt.rows(), ps.cols());
    std::copy(ps.value().values().begin(), ps.value().values().end(), class_preds.values().begin());
    std::copy(pt.value().values().begin(), pt.value().values().end(),
              class_preds.values().begin() + static_cast<std::ptrdiff_t>(ps.value().size()));
    std::vector<int> domains(ps.rows(), 1);
    domains.resize(ps.rows() + pt.rows(), 0);
    Var l_adv = adversarial_loss(dp, class_preds, domains, class_w, {flags.class_sel, flags.class_sel});
    adv_value = l_adv.value().item();
    total = add(total, l_adv);
  }
  double ent_value = 0.0;
  if (flags.entropy_min) {
    Var l_ent = entropy_loss(pt);
    ent_value = l_ent.value().item();
    total = add(total, scale(l_ent, sp.entropy_coef));
  }

  b.zero_grad();
  tape.backward(total);
  const auto params = b.parameters();
  sgd_step(params, st.velocity, sp.lr, sp.momentum);
  ++st.global_step;
  return objective(l_sup.value().item(), l_self.value().item(), adv_value, ent_value);
}

struct EpochResult {
  ClassWeights w;                    // estimated at epoch start, frozen for the epoch
  bool self_active = false;
  std::vector<LossBreakdown> trace;  // every log_interval-th step
  LossBreakdown mean;                // averaged over all steps
};

// Weights fed to the losses: w itself once selection is live, uniform during
// the selection warm-up, all ones when class selection is off.
inline std::vector<double> gated_class_weights(const ClassWeights& w, const VariantFlags& flags, bool selection_live) {
  if (!flags.class_sel) return std::vector<double>(w.size(), 1.0);
  if (!selection_live) return std::vector<double>(w.size(), 1.0 / static_cast<double>(w.size()));
  return {w.values().begin(), w.values().end()};
}

inline std::size_t steps_per_epoch(const Dataset& source, const Dataset& target, std::size_t batch_size) {
  return BatchIterator(source.size(), target.size(), batch_size).steps_per_epoch();
}

// One shuffled pass. At epoch start w is re-estimated from the whole target
// set and, once warm-up is over, pseudo-labels are reassigned; both stay
// fixed for the rest of the epoch. Progress p = global_step / total_steps
// drives lr and lambda.
inline EpochResult train_epoch(TrainState& st, const Dataset& source, const Dataset& target,
                               const VariantFlags& flags, const Schedule& sched, std::size_t epoch_index,
                               Rng& shuffle_rng) {
  if (st.total_steps == 0) throw UsageError("train_epoch: total_steps not set");
  const Matrix target_all = target.features();
  const Matrix target_preds = predict(st.bundle, target_all);

  EpochResult res;
  res.w = class_transferable_probability(target_preds);
  res.self_active = flags.self_training && epoch_index >= sched.warmup_epochs;
  std::vector<std::size_t> pseudo_all;
  if (res.self_active) pseudo_all = assign_pseudo_labels(target_preds).hard;
  const std::vector<double> class_w =
      gated_class_weights(res.w, flags, epoch_index >= sched.selection_warmup_epochs);

  const BatchIterator it(source.size(), target.size(), sched.batch_size);
  const auto batches = it.epoch(shuffle_rng);
  double s_sup = 0, s_self = 0, s_adv = 0, s_ent = 0;
  for (std::size_t s = 0; s < batches.size(); ++s) {
    if (st.global_step >= st.total_steps) throw UsageError("train_epoch: more steps than total_steps");
    StepBatch batch;
    batch.source_x = source.features(batches[s].source);
    batch.source_y = source.labels(batches[s].source);
    batch.target_x = target.features(batches[s].target);
    if (res.self_active)
      for (std::size_t i : batches[s].target) batch.target_pseudo.push_back(pseudo_all[i]);

    const double p = static_cast<double>(st.global_step + 1) / static_cast<double>(st.total_steps);
    StepParams sp;
    sp.lr = lr_at(p, sched);
    sp.lambda = sched.lambda_max * adv_ramp(p, sched.ramp_gamma);
    sp.momentum = sched.momentum;
    sp.entropy_coef = sched.entropy_coef;
    sp.self_active = res.self_active;
    const LossBreakdown lb = train_step(st, batch, class_w, flags, sp);
    s_sup += lb.l_sup;
    s_self += lb.l_self;
    s_adv += lb.l_adv;
    s_ent += lb.l_ent;
    if (s % sched.log_interval == 0) res.trace.push_back(lb);
  }
  const double n = static_cast<double>(batches.size());
  res.mean = objective(s_sup / n, s_self / n, s_adv / n, s_ent / n);
  return res;
}

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

inline EvalResult evaluate_predictions(const Matrix& preds, std::span<const std::size_t> labels) {
  if (labels.empty()) throw UsageError("evaluate: empty dataset");
  if (labels.size() != preds.rows()) throw DimensionError("evaluate: labels misaligned with predictions");
  const std::size_t k = preds.cols();
  EvalResult r;
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) throw DomainError("evaluate: label out of range");
    const std::size_t yhat = argmax(preds.row(i));
    ++r.confusion[labels[i]][yhat];
    if (yhat == labels[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  return r;
}

inline EvalResult evaluate(ModelBundle& bundle, const Matrix& x, std::span<const std::size_t> labels) {
  return evaluate_predictions(predict(bundle, x), labels);
}

inline EvalResult evaluate(ModelBundle& bundle, const Dataset& labeled) {
  if (labeled.empty()) throw UsageError("evaluate: empty dataset");
  return evaluate(bundle, labeled.features(), labeled.labels());
}

}  // namespace pda
