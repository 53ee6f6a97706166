#pragma once

// Independent oracles shared by the unit tests and the acceptance binary.
// Nothing in here calls back into the autodiff being checked except to read
// the scalar value of a loss.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "pda/losses.hpp"
#include "pda/nets.hpp"
#include "pda/oracle.hpp"
#include "pda/rng.hpp"
#include "pda/tensor.hpp"
#include "pda/trainer.hpp"

namespace pda::testing {

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

// Random rows on the probability simplex (normalized exponentials).
inline Matrix random_simplex_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (double& v : m.row(i)) s += (v = -std::log(1.0 - rng.uniform()));
    for (double& v : m.row(i)) v /= s;
  }
  return m;
}

// |a - n| / max(|a|, |n|, 1e-2): relative where the gradient is sizeable,
// absolute (scaled by 100) where it is close to zero.
inline double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

// Central differences at step h over every entry of every tensor in
// `params`, compared against the gradients that one backward pass of `loss`
// leaves in those tensors. `factors[t]` is the expected ratio analytic /
// numeric for tensor t (default 1); tensors upstream of a gradient reversal
// with strength lambda expect -lambda.
inline GradCheck check_gradients(std::span<Tensor* const> params, const std::function<Var(Tape&)>& loss,
                                 std::vector<double> factors = {}, double h = 1e-5) {
  factors.resize(params.size(), 1.0);
  for (Tensor* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<Matrix> analytic;
  for (Tensor* p : params) analytic.push_back(p->grad() ? *p->grad() : Matrix(p->rows(), p->cols()));

  const auto eval = [&] {
    Tape tape;
    return loss(tape).value().item();
  };
  GradCheck out;
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::vector<double>& v = params[t]->value().values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + h;
      const double up = eval();
      v[i] = saved - h;
      const double down = eval();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic[t].values()[i], factors[t] * numeric));
      ++out.entries;
    }
  }
  for (Tensor* p : params) p->zero_grad();
  return out;
}

// Smallest |pre-activation| over every relu unit of `net` on input x,
// computed with plain loops. Finite differences are meaningless within a
// step of a kink, so gradient checks redraw inputs that land too close.
inline double relu_margin(const Mlp& net, const Matrix& x) {
  double margin = std::numeric_limits<double>::infinity();
  Matrix h = x;
  for (const DenseLayer& l : net.layers()) {
    const Matrix& w = l.weight.value();
    Matrix z(h.rows(), w.cols());
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) {
        double s = l.bias.value()(0, j);
        for (std::size_t k = 0; k < w.rows(); ++k) s += h(i, k) * w(k, j);
        z(i, j) = s;
      }
    if (l.activation == Activation::relu) {
      for (double& v : z.values()) {
        margin = std::min(margin, std::abs(v));
        v = std::max(v, 0.0);
      }
    }
    h = std::move(z);
  }
  return margin;
}

// Plain-loop forward pass of an MLP (no tape).
inline Matrix mlp_reference(const Mlp& net, const Matrix& x) {
  Matrix h = x;
  for (const DenseLayer& l : net.layers()) {
    const Matrix& w = l.weight.value();
    Matrix z(h.rows(), w.cols());
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) {
        double s = l.bias.value()(0, j);
        for (std::size_t k = 0; k < w.rows(); ++k) s += h(i, k) * w(k, j);
        z(i, j) = l.activation == Activation::relu ? std::max(s, 0.0) : s;
      }
    h = std::move(z);
  }
  return h;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

// Random architecture for gradient checks: up to `max_layers` hidden widths
// in [1, 6].
inline std::vector<std::size_t> random_widths(Rng& rng, std::size_t max_layers) {
  std::vector<std::size_t> w(rng.below(max_layers + 1));
  for (auto& v : w) v = 1 + rng.below(6);
  return w;
}

enum class NetKind { feature, classifier, discriminator_shared, discriminator_private };

// One randomized configuration of the requested network, checked against
// central differences. Parameters and (for D) the incoming features are
// all checked; D runs through grad_reverse with a random lambda.
inline GradCheck net_gradcheck(Rng& rng, NetKind kind) {
  const std::size_t in = 1 + rng.below(4), m = 1 + rng.below(5);
  for (;;) {
    const Matrix x = random_matrix(rng, m, in);
    if (kind == NetKind::feature || kind == NetKind::classifier) {
      const std::size_t k = 1 + rng.below(5);
      std::vector<std::size_t> widths = random_widths(rng, 2);
      const Activation last = kind == NetKind::feature ? Activation::relu : Activation::none;
      if (kind == NetKind::classifier) widths.push_back(k);
      if (widths.empty()) widths.push_back(1 + rng.below(6));
      Mlp net = Mlp::create(in, widths, Activation::relu, last, rng);
      for (DenseLayer& l : net.layers()) l.bias.value() = random_matrix(rng, 1, l.out_dim());
      if (relu_margin(net, x) < 1e-3) continue;
      const Matrix probe = random_matrix(rng, m, net.out_dim());
      std::vector<Tensor*> params;
      net.collect_parameters(params);
      return check_gradients(params, [&](Tape& t) {
        Var h = f_forward(net, t, t.input(x));
        if (kind == NetKind::classifier) h = g_forward(net, t, t.input(x));
        return sum(mul(h, t.input(probe)));
      });
    }
    const bool shared = kind == NetKind::discriminator_shared;
    const std::size_t heads = 1 + rng.below(5);
    MultiTaskDiscriminator d = MultiTaskDiscriminator::create(in, random_widths(rng, 2), heads, shared, rng);
    std::vector<Tensor*> params;
    d.collect_parameters(params);
    for (Tensor* p : params)
      if (p->rows() == 1) p->value() = random_matrix(rng, 1, p->cols());
    bool near_kink = false;
    if (shared) {
      near_kink = relu_margin(d.trunk(), x) < 1e-3;
    } else {
      for (const Mlp& t : d.private_trunks()) near_kink = near_kink || relu_margin(t, x) < 1e-3;
    }
    if (near_kink) continue;
    Tensor features(x, true);
    params.push_back(&features);
    const double lambda = rng.uniform(0.0, 1.5);
    const Matrix probe = random_matrix(rng, m, heads);
    std::vector<double> factors(params.size(), 1.0);
    factors.back() = -lambda;
    return check_gradients(
        params, [&](Tape& t) { return sum(mul(d_forward(d, t, t.watch(features), lambda), t.input(probe))); },
        factors);
  }
}

// Every term of the intermediate inequality recomputed from scratch.
struct BoundTerms {
  double w_error_l1 = 0.0;
  double delta_bar = 0.0;
  double e_type1 = 0.0;
  double e_tgt_shared = 0.0;
  double rhs() const { return 2.0 * delta_bar + 2.0 * e_type1 + 2.0 * e_tgt_shared; }
};

inline BoundTerms bound_terms_reference(const Matrix& preds, const std::vector<std::size_t>& labels,
                                        const std::vector<bool>& in_c) {
  const std::size_t n = preds.rows(), k = preds.cols();
  BoundTerms b;
  std::vector<double> w(k, 0.0), w_true(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t top = 0, top_c = k;
    for (std::size_t j = 0; j < k; ++j) {
      w[j] += preds(i, j) / static_cast<double>(n);
      if (preds(i, j) > preds(i, top)) top = j;
      if (in_c[j] && (top_c == k || preds(i, j) > preds(i, top_c))) top_c = j;
    }
    w_true[labels[i]] += 1.0 / static_cast<double>(n);
    b.delta_bar += (1.0 - preds(i, top)) / static_cast<double>(n);
    if (!in_c[top]) b.e_type1 += 1.0 / static_cast<double>(n);
    if (top_c != labels[i]) b.e_tgt_shared += 1.0 / static_cast<double>(n);
  }
  for (std::size_t j = 0; j < k; ++j) b.w_error_l1 += std::abs(w[j] - w_true[j]);
  return b;
}

// Random oracle context over k classes: a nonempty C and n labels drawn from it.
inline oracle::OracleContext random_context(Rng& rng, std::size_t k, std::size_t n) {
  oracle::OracleContext o;
  while (o.shared_classes.empty())
    for (std::size_t j = 0; j < k; ++j)
      if (rng.uniform() < 0.5) o.shared_classes.push_back(j);
  for (std::size_t i = 0; i < n; ++i) o.target_labels.push_back(o.shared_classes[rng.below(o.shared_classes.size())]);
  return o;
}

inline std::vector<bool> membership(const oracle::OracleContext& o, std::size_t k) {
  std::vector<bool> in(k, false);
  for (std::size_t c : o.shared_classes) in[c] = true;
  return in;
}

// Rows of mixed sharpness: raising simplex rows to a random power moves them
// between near-uniform and near-one-hot.
inline Matrix mixed_rows(Rng& rng, std::size_t n, std::size_t k) {
  Matrix p = random_simplex_rows(rng, n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const double power = std::exp(rng.uniform(-2.0, 3.0));
    double s = 0.0;
    for (double& v : p.row(i)) s += (v = std::pow(v, power));
    for (double& v : p.row(i)) v /= s;
  }
  return p;
}



struct SignGap {
  double discriminator = 0.0;  // max |dD composite - dD descent of L_adv|
  double feature = 0.0;        // max |dF adversarial part + lambda dF descent of L_adv|
  double feature_scale = 0.0;  // max |lambda dF descent of L_adv|, guards against a vacuous pass
};

// Gradients from one composite train_step (lr 0) against a separate descent
// pass of L_adv without the reversal layer. The adversarial part of the F
// gradient is isolated by subtracting a run with the adversary switched off.
inline SignGap minmax_sign_gap(const ModelBundle& init, const StepBatch& batch, const std::vector<double>& w,
                               double lambda) {
  TrainState st{init, {}, 0, 1};
  train_step(st, batch, w, VariantFlags::san_pp(), StepParams{0.0, lambda, 0.0, 0.0, true});
  const auto composite = st.bundle.parameters();

  TrainState base{init, {}, 0, 1};
  train_step(base, batch, w, VariantFlags::source_only(), StepParams{0.0, lambda, 0.0, 0.0, true});
  const auto sup_self = base.bundle.parameters();

  ModelBundle adv = init;
  Tape t;
  Var fs = f_forward(adv.feature, t, t.input(batch.source_x));
  Var ft = f_forward(adv.feature, t, t.input(batch.target_x));
  Var ps = g_forward(adv.classifier, t, fs);
  Var pt = g_forward(adv.classifier, t, ft);
  const std::size_t ns = ps.rows(), nt = pt.rows(), k = ps.cols();
  Matrix y(ns + nt, k);
  std::vector<int> dom(ns + nt, 0);
  for (std::size_t i = 0; i < ns; ++i) {
    dom[i] = 1;
    for (std::size_t j = 0; j < k; ++j) y(i, j) = ps.value()(i, j);
  }
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t j = 0; j < k; ++j) y(ns + i, j) = pt.value()(i, j);
  Var dp = sigmoid(adv.discriminator.logits(t, concat_rows(fs, ft)));
  adv.zero_grad();
  t.backward(adversarial_loss(dp, y, dom, w, {true, true}));
  const auto descent = adv.parameters();

  std::vector<Tensor*> fp, gp;
  adv.feature.collect_parameters(fp);
  adv.classifier.collect_parameters(gp);
  const std::size_t n_f = fp.size(), n_g = gp.size();
  SignGap gap;
  for (std::size_t i = 0; i < composite.size(); ++i) {
    const Matrix& g = *composite[i]->grad();
    const Matrix& ga = *descent[i]->grad();
    if (i >= n_f + n_g) {
      gap.discriminator = std::max(gap.discriminator, max_abs_diff(g, ga));
    } else if (i < n_f) {
      const Matrix& gs = *sup_self[i]->grad();
      for (std::size_t j = 0; j < g.size(); ++j) {
        gap.feature = std::max(gap.feature, std::abs((g.values()[j] - gs.values()[j]) + lambda * ga.values()[j]));
        gap.feature_scale = std::max(gap.feature_scale, std::abs(lambda * ga.values()[j]));
      }
    }
  }
  return gap;
}

}  // namespace pda::testing
